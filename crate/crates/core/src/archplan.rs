//! Channel and resolution bookkeeping for backbone networks, plus small
//! forward evaluators for residual, dense and dual-path layers.
//!
//! A network is a list of [`Stage`]s. [`plan_network`] walks it and records
//! the width and the output size (as a fraction of the input side) of every
//! stage for both the full-scale and the half-scale path, followed by the
//! concatenation and readout rows of the multi-scale head.

use std::fmt;

use crate::error::{Error, Result};
use crate::resample::{concat_channels, relu, Conv2d, FeatureGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Standard,
    Residual,
    Dense,
    DualPath,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Standard => "standard",
            BlockKind::Residual => "residual",
            BlockKind::Dense => "dense",
            BlockKind::DualPath => "dual_path",
        }
    }
}

/// One block of repeated layers.
///
/// `out_channels` applies to standard and residual blocks, `growth` to dense
/// and dual-path blocks, and `residual_width` to dual-path blocks only.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub layers: usize,
    pub growth: Option<usize>,
    pub residual_width: Option<usize>,
    pub out_channels: Option<usize>,
    pub stride: usize,
    pub dilation: usize,
}

impl BlockSpec {
    pub fn dense(layers: usize, growth: usize) -> Self {
        Self {
            kind: BlockKind::Dense,
            layers,
            growth: Some(growth),
            residual_width: None,
            out_channels: None,
            stride: 1,
            dilation: 1,
        }
    }

    pub fn dual_path(residual_width: usize, layers: usize, growth: usize, stride: usize) -> Self {
        Self {
            kind: BlockKind::DualPath,
            layers,
            growth: Some(growth),
            residual_width: Some(residual_width),
            out_channels: None,
            stride,
            dilation: 1,
        }
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("{} block: {msg}", self.kind.name())));
        if self.layers == 0 {
            return bad("needs at least one layer".into());
        }
        if !matches!(self.stride, 1 | 2) {
            return bad(format!("stride must be 1 or 2, got {}", self.stride));
        }
        if self.dilation == 0 {
            return bad("dilation must be positive".into());
        }
        match self.kind {
            BlockKind::Standard | BlockKind::Residual => {
                if !matches!(self.out_channels, Some(c) if c > 0) {
                    return bad("needs positive out_channels".into());
                }
            }
            BlockKind::Dense => {
                if !matches!(self.growth, Some(k) if k > 0) {
                    return bad("needs positive growth".into());
                }
            }
            BlockKind::DualPath => {
                if !matches!(self.growth, Some(k) if k > 0) {
                    return bad("needs positive growth".into());
                }
                if !matches!(self.residual_width, Some(r) if r > 0) {
                    return bad("needs positive residual_width".into());
                }
            }
        }
        Ok(())
    }

    /// Width after the block given the width entering it.
    pub fn out_width(&self, in_channels: usize) -> usize {
        match self.kind {
            BlockKind::Standard | BlockKind::Residual => self.out_channels.unwrap_or(in_channels),
            BlockKind::Dense => dense_block_channels(in_channels, self.layers, self.growth.unwrap_or(0)),
            BlockKind::DualPath => dual_path_block_channels(
                self.residual_width.unwrap_or(0),
                self.layers,
                self.growth.unwrap_or(0),
            ),
        }
    }
}

/// Width after `layers` densely connected layers: `H + K * L`.
pub fn dense_block_channels(in_channels: usize, layers: usize, growth: usize) -> usize {
    in_channels + growth * layers
}

/// Width of a dual-path block output: the residual path `R` plus a dense path
/// seeded at `2K` and grown by `K` per layer.
pub fn dual_path_block_channels(residual_width: usize, layers: usize, growth: usize) -> usize {
    residual_width + (layers + 2) * growth
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageKind {
    Conv { out_channels: usize, stride: usize },
    Pool { stride: usize },
    Block(BlockSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    /// Free-form kernel description shown in the plan table.
    pub filter: String,
    pub kind: StageKind,
}

impl Stage {
    pub fn conv(name: &str, filter: &str, out_channels: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            filter: filter.into(),
            kind: StageKind::Conv {
                out_channels,
                stride,
            },
        }
    }

    pub fn pool(name: &str, filter: &str, stride: usize) -> Self {
        Self {
            name: name.into(),
            filter: filter.into(),
            kind: StageKind::Pool { stride },
        }
    }

    pub fn block(name: &str, filter: &str, spec: BlockSpec) -> Self {
        Self {
            name: name.into(),
            filter: filter.into(),
            kind: StageKind::Block(spec),
        }
    }

    pub fn stride(&self) -> usize {
        match &self.kind {
            StageKind::Conv { stride, .. } | StageKind::Pool { stride } => *stride,
            StageKind::Block(b) => b.stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub name: String,
    pub input_channels: usize,
    /// Whether a weight-shared half-scale path runs alongside the full one.
    pub multipath: bool,
    pub stages: Vec<Stage>,
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::InvalidSpec("input_channels must be positive".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::InvalidSpec(format!("`{}` has no stages", self.name)));
        }
        for stage in &self.stages {
            match &stage.kind {
                StageKind::Conv {
                    out_channels,
                    stride,
                } => {
                    if *out_channels == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "stage `{}`: out_channels must be positive",
                            stage.name
                        )));
                    }
                    check_stride(&stage.name, *stride)?;
                }
                StageKind::Pool { stride } => check_stride(&stage.name, *stride)?,
                StageKind::Block(b) => b
                    .validate()
                    .map_err(|e| Error::InvalidSpec(format!("stage `{}`: {e}", stage.name)))?,
            }
        }
        Ok(())
    }
}

fn check_stride(stage: &str, stride: usize) -> Result<()> {
    if matches!(stride, 1 | 2) {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!(
            "stage `{stage}`: stride must be 1 or 2, got {stride}"
        )))
    }
}

/// Exact non-negative rational, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Fraction {
    pub const ONE: Fraction = Fraction { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidSpec("zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn mul(self, num: u64, den: u64) -> Self {
        Self::new(self.num * num, self.den * den).expect("non-zero denominator")
    }

    /// `self <= other`, compared by cross-multiplication.
    pub fn le(self, other: Fraction) -> bool {
        self.num as u128 * other.den as u128 <= other.num as u128 * self.den as u128
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl std::str::FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("`{s}` is not a fraction"));
        let (num, den) = match s.trim().split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        Fraction::new(num.parse().map_err(|_| bad())?, den.parse().map_err(|_| bad())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Stage,
    Concat,
    Readout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub stage: String,
    pub filter: String,
    pub kind: RowKind,
    pub channels: usize,
    pub size: Fraction,
    /// Size on the half-scale path; `None` for rows that merge the paths.
    pub half_size: Option<Fraction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub name: String,
    pub readout_layers: usize,
    pub rows: Vec<PlanRow>,
}

impl LayerPlan {
    pub fn stage_rows(&self) -> impl Iterator<Item = &PlanRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Stage)
    }

    pub fn stage_channels(&self) -> Vec<usize> {
        self.stage_rows().map(|r| r.channels).collect()
    }

    /// Output size of the backbone (last stage row).
    pub fn final_size(&self) -> Fraction {
        self.stage_rows().last().map(|r| r.size).unwrap_or(Fraction::ONE)
    }

    pub fn final_channels(&self) -> usize {
        self.stage_rows().last().map(|r| r.channels).unwrap_or(0)
    }

    pub fn concat(&self) -> Option<&PlanRow> {
        self.rows.iter().find(|r| r.kind == RowKind::Concat)
    }

    pub fn readout(&self) -> Option<&PlanRow> {
        self.rows.iter().find(|r| r.kind == RowKind::Readout)
    }

    pub fn to_markdown(&self) -> String {
        let multipath = self.concat().is_some();
        let mut out = format!("### {}\n\n", self.name);
        if multipath {
            out.push_str("| Stage | Filter | Channels | Size (x1.0) | Size (x0.5) |\n");
            out.push_str("|---|---|---:|---:|---:|\n");
        } else {
            out.push_str("| Stage | Filter | Channels | Size |\n");
            out.push_str("|---|---|---:|---:|\n");
        }
        for r in &self.rows {
            out.push_str(&format!("| {} | {} | {} | {} |", r.stage, r.filter, r.channels, r.size));
            if multipath {
                match r.half_size {
                    Some(h) => out.push_str(&format!(" {h} |")),
                    None => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Walks the stages, tracking width and the cumulative product of strides.
/// The readout output side is `2^N` times the backbone output.
pub fn plan_network(spec: &ArchSpec, readout_layers: usize) -> Result<LayerPlan> {
    spec.validate()?;
    if readout_layers > 3 {
        return Err(Error::InvalidSpec(format!(
            "at most 3 readout upsampling layers, got {readout_layers}"
        )));
    }
    let mut rows = Vec::with_capacity(spec.stages.len() + 2);
    let mut width = spec.input_channels;
    let mut size = Fraction::ONE;
    for stage in &spec.stages {
        width = match &stage.kind {
            StageKind::Conv { out_channels, .. } => *out_channels,
            StageKind::Pool { .. } => width,
            StageKind::Block(b) => b.out_width(width),
        };
        size = size.mul(1, stage.stride() as u64);
        rows.push(PlanRow {
            stage: stage.name.clone(),
            filter: stage.filter.clone(),
            kind: RowKind::Stage,
            channels: width,
            size,
            half_size: spec.multipath.then(|| size.mul(1, 2)),
        });
    }
    let head_channels = if spec.multipath {
        rows.push(PlanRow {
            stage: "Concatenation".into(),
            filter: String::new(),
            kind: RowKind::Concat,
            channels: 2 * width,
            size,
            half_size: None,
        });
        2 * width
    } else {
        width
    };
    debug_assert!(head_channels > 0);
    rows.push(PlanRow {
        stage: "Readout Net".into(),
        filter: format!("N={readout_layers}"),
        kind: RowKind::Readout,
        channels: 1,
        size: size.mul(1 << readout_layers, 1),
        half_size: None,
    });
    Ok(LayerPlan {
        name: spec.name.clone(),
        readout_layers,
        rows,
    })
}

/// DenseNet-161 backbone. With `modified`, the last transition pooling uses
/// stride 1 so the backbone output stays at 1/16 instead of 1/32.
pub fn densenet161(modified: bool) -> ArchSpec {
    let last_pool = if modified { 1 } else { 2 };
    ArchSpec {
        name: if modified { "DenseSal" } else { "DenseNet-161" }.into(),
        input_channels: 3,
        multipath: true,
        stages: vec![
            Stage::conv("Conv", "7x7 (stride=2)", 96, 2),
            Stage::pool("Pooling", "3x3 (stride=2)", 2),
            Stage::block("Dense Block", "L=6 (+48)", BlockSpec::dense(6, 48)),
            Stage::conv("Conv", "1x1 (stride=1)", 192, 1),
            Stage::pool("Pooling", "2x2 (stride=2)", 2),
            Stage::block("Dense Block", "L=12 (+48)", BlockSpec::dense(12, 48)),
            Stage::conv("Conv", "1x1 (stride=1)", 384, 1),
            Stage::pool("Pooling", "2x2 (stride=2)", 2),
            Stage::block("Dense Block", "L=36 (+48)", BlockSpec::dense(36, 48)),
            Stage::conv("Conv", "1x1 (stride=1)", 1056, 1),
            Stage::pool("Pooling", &format!("2x2 (stride={last_pool})"), last_pool),
            Stage::block("Dense Block", "L=24 (+48)", BlockSpec::dense(24, 48)),
        ],
    }
}

/// Default residual-path widths of the four DPN-131 blocks.
pub const DPN131_RESIDUAL_WIDTHS: [usize; 4] = [256, 512, 1024, 2048];

/// DPN-131 backbone. With `modified`, the fourth block keeps stride 1 and
/// uses dilation 2 instead of downsampling.
pub fn dpn131(modified: bool) -> ArchSpec {
    let [r1, r2, r3, r4] = DPN131_RESIDUAL_WIDTHS;
    let block4 = if modified {
        BlockSpec::dual_path(r4, 3, 128, 1).with_dilation(2)
    } else {
        BlockSpec::dual_path(r4, 3, 128, 2)
    };
    ArchSpec {
        name: if modified { "DPNSal" } else { "DPN-131" }.into(),
        input_channels: 3,
        multipath: true,
        stages: vec![
            Stage::conv("Conv", "7x7 (stride=2)", 128, 2),
            // the 3x3 max pool (stride 2) is folded into Block1
            Stage::block("Block1", "3x3 max pool + [1x1, 3x3, 1x1 (+16)] x4", BlockSpec::dual_path(r1, 4, 16, 2)),
            Stage::block("Block2", "[1x1, 3x3, 1x1 (+32)] x8", BlockSpec::dual_path(r2, 8, 32, 2)),
            Stage::block("Block3", "[1x1, 3x3, 1x1 (+32)] x28", BlockSpec::dual_path(r3, 28, 32, 2)),
            Stage::block(
                "Block4",
                if modified {
                    "[1x1, 3x3 dilated, 1x1 (+128)] x3"
                } else {
                    "[1x1, 3x3, 1x1 (+128)] x3"
                },
                block4,
            ),
        ],
    }
}

/// Reference values a plan is checked against.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanExpectation {
    pub stage_channels: Vec<usize>,
    pub final_size: Option<Fraction>,
    pub concat_channels: Option<usize>,
    /// Reference entries known to disagree with exact arithmetic; a mismatch
    /// here is flagged rather than failed.
    pub known_discrepancies: Vec<KnownDiscrepancy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownDiscrepancy {
    pub row: String,
    pub reference: usize,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Disagrees with a reference value listed as a known discrepancy.
    Flagged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub expected: String,
    pub actual: String,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationReport {
    pub checks: Vec<Check>,
}

impl ExpectationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Flagged)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "ok",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Flagged => "flagged",
            };
            out.push_str(&format!(
                "{tag:>7}  {}: expected {}, got {}\n",
                c.label, c.expected, c.actual
            ));
        }
        out
    }
}

fn check(label: String, expected: impl ToString, actual: impl ToString) -> Check {
    let (expected, actual) = (expected.to_string(), actual.to_string());
    let status = if expected == actual {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Check {
        label,
        expected,
        actual,
        status,
    }
}

pub fn check_expectations(plan: &LayerPlan, exp: &PlanExpectation) -> ExpectationReport {
    let mut checks = Vec::new();
    let actual = plan.stage_channels();
    if actual.len() != exp.stage_channels.len() && !exp.stage_channels.is_empty() {
        checks.push(check("stage count".into(), exp.stage_channels.len(), actual.len()));
    }
    let rows: Vec<&PlanRow> = plan.stage_rows().collect();
    for (i, &want) in exp.stage_channels.iter().enumerate() {
        let label = match rows.get(i) {
            Some(r) => format!("row {} ({}) channels", i + 1, r.stage),
            None => format!("row {} channels", i + 1),
        };
        let got = actual.get(i).map_or("missing".to_string(), |c| c.to_string());
        checks.push(check(label, want, got));
    }
    if let Some(size) = exp.final_size {
        checks.push(check("final size".into(), size, plan.final_size()));
    }
    let concat = plan.concat().map(|r| r.channels);
    if let Some(want) = exp.concat_channels {
        checks.push(check(
            "Concatenation channels".into(),
            want,
            concat.map_or("missing".to_string(), |c| c.to_string()),
        ));
    }
    for d in &exp.known_discrepancies {
        let got = plan
            .rows
            .iter()
            .find(|r| r.stage == d.row)
            .map(|r| r.channels);
        let mut c = check(
            format!("{} channels (reference)", d.row),
            d.reference,
            got.map_or("missing".to_string(), |c| c.to_string()),
        );
        if c.status == CheckStatus::Fail && got.is_some() {
            c.status = CheckStatus::Flagged;
        }
        if !d.note.is_empty() {
            c.label = format!("{} [{}]", c.label, d.note);
        }
        checks.push(c);
    }
    ExpectationReport { checks }
}

/// Per-channel affine map, the inference-time form of batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Affine {
    pub fn identity(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
        }
    }

    /// Folds `gamma * (x - mean) / sqrt(var + eps) + beta`.
    pub fn from_batch_norm(gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Self {
        let scale: Vec<f64> = gamma
            .iter()
            .zip(var)
            .map(|(g, v)| g / (v + eps).sqrt())
            .collect();
        let shift = beta
            .iter()
            .zip(mean)
            .zip(&scale)
            .map(|((b, m), s)| b - m * s)
            .collect();
        Self { scale, shift }
    }

    pub fn apply(&self, g: &FeatureGrid) -> Result<FeatureGrid> {
        if self.scale.len() != g.channels() || self.shift.len() != g.channels() {
            return Err(Error::WeightShapeMismatch(format!(
                "affine over {} channels applied to {}",
                self.scale.len(),
                g.channels()
            )));
        }
        let plane = g.height() * g.width();
        let data = g
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = i / plane;
                v * self.scale[c] + self.shift[c]
            })
            .collect();
        FeatureGrid::new(g.channels(), g.height(), g.width(), data)
    }
}

fn relu_grid(g: &FeatureGrid) -> Result<FeatureGrid> {
    g.map(relu)
}

/// Residual branch `F` of a residual unit.
#[derive(Debug, Clone, PartialEq)]
pub enum ResidualBranch {
    /// `BN(C1x1(relu(BN(C3x3(relu(BN(C1x1(x))))))))`
    Bottleneck {
        reduce: Conv2d,
        bn1: Affine,
        conv: Conv2d,
        bn2: Affine,
        expand: Conv2d,
        bn3: Affine,
    },
    /// `BN(C3x3(relu(BN(C3x3(relu(x))))))`
    Basic {
        conv1: Conv2d,
        bn1: Affine,
        conv2: Conv2d,
        bn2: Affine,
    },
}

impl ResidualBranch {
    pub fn apply(&self, x: &FeatureGrid) -> Result<FeatureGrid> {
        match self {
            ResidualBranch::Bottleneck {
                reduce,
                bn1,
                conv,
                bn2,
                expand,
                bn3,
            } => {
                let h = relu_grid(&bn1.apply(&reduce.forward(x)?)?)?;
                let h = relu_grid(&bn2.apply(&conv.forward(&h)?)?)?;
                bn3.apply(&expand.forward(&h)?)
            }
            ResidualBranch::Basic {
                conv1,
                bn1,
                conv2,
                bn2,
            } => {
                let h = relu_grid(&bn1.apply(&conv1.forward(&relu_grid(x)?)?)?)?;
                bn2.apply(&conv2.forward(&h)?)
            }
        }
    }
}

/// `F(x) + x`.
pub fn residual_forward(x: &FeatureGrid, branch: &ResidualBranch) -> Result<FeatureGrid> {
    let fx = branch.apply(x)?;
    if !fx.same_shape(x) {
        return Err(Error::ShapeMismatch {
            expected: x.shape_string(),
            actual: fx.shape_string(),
        });
    }
    fx.add(x)
}

/// One densely connected layer:
/// `C3x3(relu(BN(C1x1(relu(BN(x))))))`, narrowing to `4K` then to `K` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub bn1: Affine,
    pub bottleneck: Conv2d,
    pub bn2: Affine,
    pub conv: Conv2d,
}

impl DenseLayer {
    pub fn growth(&self) -> usize {
        self.conv.out_channels
    }
}

/// Applies the layer to the channel concatenation of every earlier output.
/// Returns the `K` new channels; the caller appends them.
pub fn dense_forward(inputs: &[FeatureGrid], layer: &DenseLayer) -> Result<FeatureGrid> {
    let (first, rest) = inputs
        .split_first()
        .ok_or_else(|| Error::InvalidGrid("dense layer needs at least one input".into()))?;
    let mut x = first.clone();
    for g in rest {
        x = concat_channels(&x, g)?;
    }
    if layer.bottleneck.out_channels != 4 * layer.growth() {
        return Err(Error::WeightShapeMismatch(format!(
            "bottleneck width {} is not 4x growth {}",
            layer.bottleneck.out_channels,
            layer.growth()
        )));
    }
    let h = layer.bottleneck.forward(&relu_grid(&layer.bn1.apply(&x)?)?)?;
    layer.conv.forward(&relu_grid(&layer.bn2.apply(&h)?)?)
}

/// Runs a whole dense block from `x0`, returning the final concatenation of
/// width `H + L * K`.
pub fn dense_block_forward(x0: &FeatureGrid, layers: &[DenseLayer]) -> Result<FeatureGrid> {
    let mut outputs = vec![x0.clone()];
    for layer in layers {
        let y = dense_forward(&outputs, layer)?;
        outputs.push(y);
    }
    let mut acc = outputs[0].clone();
    for g in &outputs[1..] {
        acc = concat_channels(&acc, g)?;
    }
    Ok(acc)
}

/// Splits one dual-path layer output: the first `R` channels are added to the
/// residual path, the next `K` are appended to the dense path.
pub fn dual_path_forward(
    res_part: &FeatureGrid,
    dense_part: &FeatureGrid,
    conv_out: &FeatureGrid,
    growth: usize,
) -> Result<(FeatureGrid, FeatureGrid)> {
    let r = res_part.channels();
    if conv_out.channels() != r + growth {
        return Err(Error::SplitMismatch {
            expected: r + growth,
            actual: conv_out.channels(),
        });
    }
    let res = res_part.add(&conv_out.slice_channels(0, r)?)?;
    let dense = concat_channels(dense_part, &conv_out.slice_channels(r, r + growth)?)?;
    Ok((res, dense))
}
