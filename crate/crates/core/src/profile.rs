//! Analytic parameter and FLOP counts for a [`NetworkConfig`], derived from
//! the configuration alone (no network is built).
//!
//! Convention: one multiply-accumulate is one FLOP. Per layer:
//!
//! | layer                         | params            | FLOPs                     |
//! |-------------------------------|-------------------|---------------------------|
//! | conv k×k, Cin→Cout            | Cout·(Cin·k²+1)   | k²·Cin·Cout·H'·W'         |
//! | channel norm                  | 2·C               | 1 per element             |
//! | relu, sigmoid, add, 1−x, x⊙y  | 0                 | 1 per output element      |
//! | a⊙b + c⊙d                     | 0                 | 2 per output element      |
//! | bilinear resize               | 0                 | 4 per output element (0 when the size is unchanged) |
//!
//! Encoding tables are precomputed constants and cost nothing.

use std::fmt::Write as _;

use crate::error::Result;
use crate::net::NetworkConfig;

pub const CONVENTION: &str = "1 multiply-accumulate = 1 FLOP";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub params: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub input_hw: (usize, usize),
    pub convention: &'static str,
}

impl CostReport {
    pub fn params(&self) -> usize {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn flops(&self) -> u64 {
        self.rows.iter().map(|r| r.flops).sum()
    }

    /// Rows whose name starts with `prefix`.
    pub fn subreport(&self, prefix: &str) -> CostReport {
        CostReport {
            rows: self.rows.iter().filter(|r| r.name.starts_with(prefix)).cloned().collect(),
            input_hw: self.input_hw,
            convention: self.convention,
        }
    }

    /// Model size in megabytes of single-precision parameters.
    pub fn size_mb(&self) -> f64 {
        self.params() as f64 * 4.0 / 1e6
    }

    pub fn format_rows(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
        let mut out = format!("# {} ; input {}x{}\n", self.convention, self.input_hw.0, self.input_hw.1);
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>16}", "layer", "params", "flops");
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>12}  {:>16}", r.name, r.params, r.flops);
        }
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>16}", "total", self.params(), self.flops());
        out
    }
}

/// One line per report in the style of a Flops / Params / Size table.
pub fn format_comparison(entries: &[(&str, &CostReport)]) -> String {
    let mut out = format!("# {}\n", CONVENTION);
    let _ = writeln!(out, "{:<14} {:>10} {:>10} {:>10}", "model", "Flops(G)", "Params(M)", "Size(MB)");
    for (name, r) in entries {
        let _ = writeln!(out, "{:<14} {:>10.3} {:>10.3} {:>10.3}", name, r.flops() as f64 / 1e9, r.params() as f64 / 1e6, r.size_mb());
    }
    if let [(_, base), (_, with)] = entries {
        let _ = writeln!(
            out,
            "overhead: flops {:+.2}%  params {:+.2}%",
            100.0 * (with.flops() as f64 / base.flops() as f64 - 1.0),
            100.0 * (with.params() as f64 / base.params() as f64 - 1.0)
        );
    }
    out
}

type Hw = (usize, usize);

fn conv_out(n: usize, k: usize, stride: usize) -> usize {
    (n + 2 * (k / 2) - k) / stride + 1
}

struct Walker {
    rows: Vec<CostRow>,
}

impl Walker {
    fn row(&mut self, name: String, params: usize, flops: u64) {
        self.rows.push(CostRow { name, params, flops });
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, hw: Hw) -> Hw {
        let out = (conv_out(hw.0, k, stride), conv_out(hw.1, k, stride));
        let flops = (k * k * cin * cout * out.0 * out.1) as u64;
        self.row(name.into(), cout * (cin * k * k + 1), flops);
        out
    }

    fn norm(&mut self, name: &str, c: usize, hw: Hw) {
        self.row(name.into(), 2 * c, (c * hw.0 * hw.1) as u64);
    }

    fn elementwise(&mut self, name: &str, c: usize, hw: Hw, per: usize) {
        self.row(name.into(), 0, (per * c * hw.0 * hw.1) as u64);
    }

    fn resize(&mut self, name: &str, c: usize, from: Hw, to: Hw) {
        let flops = if from == to { 0 } else { (4 * c * to.0 * to.1) as u64 };
        self.row(name.into(), 0, flops);
    }

    fn residual(&mut self, name: &str, cin: usize, cout: usize, stride: usize, hw: Hw) -> Hw {
        let out = self.conv(&format!("{name}.conv1"), cin, cout, 3, stride, hw);
        self.norm(&format!("{name}.norm1"), cout, out);
        self.elementwise(&format!("{name}.relu1"), cout, out, 1);
        self.conv(&format!("{name}.conv2"), cout, cout, 3, 1, out);
        self.norm(&format!("{name}.norm2"), cout, out);
        if stride != 1 || cin != cout {
            self.conv(&format!("{name}.skip"), cin, cout, 1, stride, hw);
        }
        self.elementwise(&format!("{name}.add"), cout, out, 1);
        self.elementwise(&format!("{name}.relu2"), cout, out, 1);
        out
    }

    fn conv_module(&mut self, name: &str, cin: usize, cout: usize, hw: Hw) {
        self.conv(&format!("{name}.conv"), cin, cout, 3, 1, hw);
        self.norm(&format!("{name}.norm"), cout, hw);
        self.elementwise(&format!("{name}.relu"), cout, hw, 1);
    }

    #[allow(clippy::too_many_arguments)]
    fn rpem(&mut self, name: &str, cin: usize, cout: usize, blocks: usize, star: bool, gate: (usize, usize), hw: Hw) -> Hw {
        let (hidden, gate) = gate;
        let mut u = hw;
        for i in 0..blocks {
            let (c, s) = if i == 0 { (cin, if star { 2 } else { 1 }) } else { (cout, 1) };
            u = self.residual(&format!("{name}.f.{i}"), c, cout, s, u);
        }
        self.conv_module(&format!("{name}.f_sigma"), cout, hidden, u);
        self.conv(&format!("{name}.f_sigma_out"), hidden, gate, 1, 1, u);
        self.elementwise(&format!("{name}.sigmoid"), gate, u, 1);
        self.conv_module(&format!("{name}.f_pos"), cout, cout, u);
        self.elementwise(&format!("{name}.pos_rpe"), cout, u, 1);
        self.elementwise(&format!("{name}.one_minus_sigma"), gate, u, 1);
        self.elementwise(&format!("{name}.mix"), cout, u, 2);
        u
    }

    fn run(&mut self, prefix: &str, plan: &[(usize, usize, usize)], offset: usize, mut hw: Hw) -> Hw {
        for (i, &(cin, cout, stride)) in plan.iter().enumerate() {
            hw = self.residual(&format!("{prefix}.{}", offset + i), cin, cout, stride, hw);
        }
        hw
    }

    fn head(&mut self, name: &str, cin: usize, width: usize, cout: usize, hw: Hw, input: Hw) {
        self.conv_module(&format!("{name}.body"), cin, width, hw);
        self.conv(&format!("{name}.out"), width, cout, 1, 1, hw);
        self.resize(&format!("{name}.resize"), cout, hw, input);
    }
}

fn walk(cfg: &NetworkConfig, input: Hw) -> Vec<CostRow> {
    let mut wk = Walker { rows: Vec::new() };
    let stem_ch = cfg.stem_channels();
    let stem_plan: Vec<_> = (0..stem_ch.len())
        .map(|i| (if i == 0 { 3 } else { stem_ch[i - 1] }, stem_ch[i], cfg.stem_strides[i]))
        .collect();
    let sh = wk.run("stem", &stem_plan, 0, input);
    let stem_out = *stem_ch.last().expect("validated");
    let gate = |c: usize| {
        let hidden = if cfg.gate_width == 0 { c } else { cfg.gate_width };
        (hidden, if cfg.per_channel_gate { c } else { 1 })
    };
    if cfg.rpem_sites.stem_tail {
        let r = wk.rpem("stem_rpem", stem_out, stem_out, cfg.rpem_star_blocks, true, gate(stem_out), sh);
        wk.resize("stem_rpem.resize", stem_out, r, sh);
    }

    let (dw, bw) = (cfg.detail_width(), cfg.boundary_width());
    let [cw1, cw2] = cfg.context_widths();
    let split = NetworkConfig::first_half(cfg.detail_blocks);
    let detail_a: Vec<_> = (0..split).map(|i| (if i == 0 { stem_out } else { dw }, dw, 1)).collect();
    wk.run("detail", &detail_a, 0, sh);
    let bsplit = NetworkConfig::first_half(cfg.boundary_blocks);
    let boundary_a: Vec<_> = (0..bsplit).map(|i| (if i == 0 { stem_out } else { bw }, bw, 1)).collect();
    wk.run("boundary", &boundary_a, 0, sh);
    let n = cfg.context_blocks_per_stage;
    let ctx1: Vec<_> = (0..n).map(|i| if i == 0 { (stem_out, cw1, 2) } else { (cw1, cw1, 1) }).collect();
    let c1 = wk.run("context1", &ctx1, 0, sh);

    wk.conv("lateral1_detail", cw1, dw, 1, 1, c1);
    wk.resize("lateral1_detail.resize", dw, c1, sh);
    wk.elementwise("lateral1_detail.add", dw, sh, 1);
    wk.conv("lateral1_boundary", cw1, bw, 1, 1, c1);
    wk.resize("lateral1_boundary.resize", bw, c1, sh);
    wk.elementwise("lateral1_boundary.add", bw, sh, 1);
    if cfg.rpem_sites.detail_mid {
        let cin = if split == 0 { stem_out } else { dw };
        wk.rpem("detail_rpem", cin, dw, cfg.rpem_blocks, false, gate(dw), sh);
    }

    let detail_b: Vec<_> = (split..cfg.detail_blocks).map(|_| (dw, dw, 1)).collect();
    wk.run("detail", &detail_b, split, sh);
    let boundary_b: Vec<_> = (bsplit..cfg.boundary_blocks).map(|_| (bw, bw, 1)).collect();
    wk.run("boundary", &boundary_b, bsplit, sh);
    let ctx2: Vec<_> = (0..n).map(|i| if i == 0 { (cw1, cw2, 2) } else { (cw2, cw2, 1) }).collect();
    let c2 = wk.run("context2", &ctx2, 0, c1);

    wk.conv("lateral2_detail", cw2, dw, 1, 1, c2);
    wk.resize("lateral2_detail.resize", dw, c2, sh);
    wk.elementwise("lateral2_detail.add", dw, sh, 1);
    wk.conv("lateral2_boundary", cw2, bw, 1, 1, c2);
    wk.resize("lateral2_boundary.resize", bw, c2, sh);
    wk.elementwise("lateral2_boundary.add", bw, sh, 1);

    wk.conv("fuse_gate", bw, 1, 1, 1, sh);
    wk.elementwise("fuse.sigmoid", 1, sh, 1);
    wk.elementwise("fuse.one_minus_gate", 1, sh, 1);
    wk.elementwise("fuse.mix", dw, sh, 2);

    let k = cfg.num_classes;
    let hw = cfg.s_head_width();
    wk.head("s_head0", dw, hw, k, sh, input);
    wk.head("s_head1", dw, hw, k, sh, input);
    wk.head("b_head", bw, bw, 1, sh, input);
    wk.rows
}

/// Parameter counts per layer (FLOP columns are zero).
pub fn count_params(cfg: &NetworkConfig) -> Result<CostReport> {
    cfg.validate()?;
    let mut rows = walk(cfg, cfg.input_hw);
    rows.retain(|r| r.params > 0);
    for r in &mut rows {
        r.flops = 0;
    }
    Ok(CostReport { rows, input_hw: cfg.input_hw, convention: CONVENTION })
}

/// Parameters and FLOPs of one forward pass (both semantic heads included)
/// for a single `h × w` image.
pub fn count_flops(cfg: &NetworkConfig, input_hw: (usize, usize)) -> Result<CostReport> {
    cfg.validate()?;
    cfg.check_input(input_hw.0, input_hw.1)?;
    Ok(CostReport { rows: walk(cfg, input_hw), input_hw, convention: CONVENTION })
}
