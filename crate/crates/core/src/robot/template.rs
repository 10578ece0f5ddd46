//! Kinematic templates: the 8×M parameter matrix describing a synthetic manipulator.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Axis::X),
            1 => Some(Axis::Y),
            2 => Some(Axis::Z),
            _ => None,
        }
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        ['x', 'y', 'z'][self.index()]
    }
}

/// Extrusion order of the three cylinders of a link, e.g. `zxy`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pattern(pub [Axis; 3]);

impl Pattern {
    pub fn first(&self) -> Axis {
        self.0[0]
    }

    pub fn last(&self) -> Axis {
        self.0[2]
    }

    /// Base-3 code in `0..27` used in the matrix encoding.
    pub fn code(&self) -> u8 {
        (self.0[0].index() * 9 + self.0[1].index() * 3 + self.0[2].index()) as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        if code >= 27 {
            return None;
        }
        let c = code as usize;
        Some(Self([Axis::from_index(c / 9)?, Axis::from_index((c / 3) % 3)?, Axis::from_index(c % 3)?]))
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axes: Vec<Axis> = s.chars().map(Axis::from_char).collect::<Option<_>>().ok_or_else(|| {
            Error::InvalidTemplate(format!("pattern {s:?} must use only x, y, z"))
        })?;
        let arr: [Axis; 3] = axes
            .try_into()
            .map_err(|_| Error::InvalidTemplate(format!("pattern {s:?} must have 3 characters")))?;
        Ok(Self(arr))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            write!(f, "{}", a.as_char())?;
        }
        Ok(())
    }
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkTemplate {
    pub pattern: Pattern,
    pub len_x: f64,
    pub len_y: f64,
    pub len_z: f64,
    pub radius: f64,
    pub chiral_flip: bool,
}

impl LinkTemplate {
    pub fn length_along(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.len_x,
            Axis::Y => self.len_y,
            Axis::Z => self.len_z,
        }
    }

    fn length_mut(&mut self, axis: Axis) -> &mut f64 {
        match axis {
            Axis::X => &mut self.len_x,
            Axis::Y => &mut self.len_y,
            Axis::Z => &mut self.len_z,
        }
    }

    /// Extrusion lengths in pattern order; a zero entry is an absent cylinder.
    pub fn extrusions(&self) -> [(Axis, f64); 3] {
        self.pattern.0.map(|a| (a, self.length_along(a)))
    }

    /// Number of cylinders with non-zero extent.
    pub fn cylinder_count(&self) -> usize {
        self.extrusions().iter().filter(|(_, l)| *l > 0.0).count()
    }

    fn validate(&self) -> Result<()> {
        let lens = [self.len_x, self.len_y, self.len_z];
        if lens.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidTemplate("link lengths must be finite and non-negative".into()));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidTemplate("link radius must be positive".into()));
        }
        if self.cylinder_count() == 0 {
            return Err(Error::InvalidTemplate("link has no cylinder of positive length".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorTemplate {
    pub base_height: f64,
    pub base_radius: f64,
    pub cuboid_scale: f64,
}

impl EndEffectorTemplate {
    fn validate(&self) -> Result<()> {
        for v in [self.base_height, self.base_radius, self.cuboid_scale] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidTemplate("end-effector parameters must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConstraint {
    pub lower: f64,
    pub upper: f64,
}

impl JointConstraint {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::InvalidTemplate(format!(
                "joint limits must be finite with lower < upper (got {}, {})",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Links `L_1..L_{M-1}`, the end effector, and `M` revolute joints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicTemplate {
    pub links: Vec<LinkTemplate>,
    pub end_effector: EndEffectorTemplate,
    pub joints: Vec<JointConstraint>,
}

pub const TEMPLATE_ROWS: usize = 8;
const PAD: f64 = -1.0;

impl KinematicTemplate {
    /// Number of template columns, equal to the number of revolute joints.
    pub fn columns(&self) -> usize {
        self.links.len() + 1
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != self.links.len() + 1 {
            return Err(Error::InvalidTemplate(format!(
                "{} links need {} joints, got {}",
                self.links.len(),
                self.links.len() + 1,
                self.joints.len()
            )));
        }
        for l in &self.links {
            l.validate()?;
        }
        self.end_effector.validate()?;
        for j in &self.joints {
            j.validate()?;
        }
        if let Some(i) = self.chain_violation() {
            return Err(Error::InvalidTemplate(format!(
                "link {} pattern {} does not chain onto link {} pattern {}",
                i + 1,
                self.links[i].pattern,
                i,
                self.links[i - 1].pattern
            )));
        }
        Ok(())
    }

    /// Index of the first link whose first pattern axis differs from its
    /// predecessor's last pattern axis.
    pub fn chain_violation(&self) -> Option<usize> {
        (1..self.links.len()).find(|&i| self.links[i - 1].pattern.last() != self.links[i].pattern.first())
    }

    /// Column-major 8×M encoding: six link (or end-effector) entries followed
    /// by the two joint limits.
    pub fn to_columns(&self) -> Vec<[f64; TEMPLATE_ROWS]> {
        let mut cols: Vec<[f64; TEMPLATE_ROWS]> = self
            .links
            .iter()
            .zip(&self.joints)
            .map(|(l, j)| {
                [
                    l.pattern.code() as f64,
                    l.len_x,
                    l.len_y,
                    l.len_z,
                    l.radius,
                    if l.chiral_flip { 1.0 } else { 0.0 },
                    j.lower,
                    j.upper,
                ]
            })
            .collect();
        let e = &self.end_effector;
        let jl = self.joints.last().copied().unwrap_or(JointConstraint::new(0.0, 0.0));
        cols.push([e.base_height, e.base_radius, e.cuboid_scale, PAD, PAD, PAD, jl.lower, jl.upper]);
        cols
    }

    pub fn from_columns(cols: &[[f64; TEMPLATE_ROWS]]) -> Result<Self> {
        let (ee, links) = cols.split_last().ok_or_else(|| Error::InvalidTemplate("no columns".into()))?;
        if ee[3..6] != [PAD; 3] {
            return Err(Error::InvalidTemplate("end-effector column must be padded with -1".into()));
        }
        let mut out_links = Vec::with_capacity(links.len());
        let mut joints = Vec::with_capacity(cols.len());
        for c in links {
            if c[0].fract() != 0.0 || c[0] < 0.0 {
                return Err(Error::InvalidTemplate(format!("pattern code {} is not an integer", c[0])));
            }
            let pattern = Pattern::from_code(c[0] as u8)
                .ok_or_else(|| Error::InvalidTemplate(format!("pattern code {} out of range", c[0])))?;
            let chiral_flip = match c[5] {
                v if v == 0.0 => false,
                v if v == 1.0 => true,
                v => return Err(Error::InvalidTemplate(format!("chiral flip must be 0 or 1, got {v}"))),
            };
            out_links.push(LinkTemplate { pattern, len_x: c[1], len_y: c[2], len_z: c[3], radius: c[4], chiral_flip });
            joints.push(JointConstraint::new(c[6], c[7]));
        }
        joints.push(JointConstraint::new(ee[6], ee[7]));
        let t = Self {
            links: out_links,
            end_effector: EndEffectorTemplate { base_height: ee[0], base_radius: ee[1], cuboid_scale: ee[2] },
            joints,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sawyer7,
    Ur6,
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sawyer7" => Ok(Family::Sawyer7),
            "ur6" => Ok(Family::Ur6),
            _ => Err(Error::InvalidArgument(format!("unknown family {s:?} (expected sawyer7 or ur6)"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Sawyer7 => "sawyer7",
            Family::Ur6 => "ur6",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Normal,
    Uniform,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Strategy::Normal),
            "uniform" => Ok(Strategy::Uniform),
            _ => Err(Error::InvalidArgument(format!("unknown strategy {s:?} (expected normal or uniform)"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Normal => "normal",
            Strategy::Uniform => "uniform",
        })
    }
}

fn link(pattern: &str, lx: f64, ly: f64, lz: f64, radius: f64, chiral_flip: bool) -> LinkTemplate {
    LinkTemplate { pattern: pattern.parse().expect("static pattern"), len_x: lx, len_y: ly, len_z: lz, radius, chiral_flip }
}

impl Family {
    pub fn dof(self) -> usize {
        match self {
            Family::Sawyer7 => 7,
            Family::Ur6 => 6,
        }
    }

    /// Nominal parameters approximating the commercial arm of the family.
    pub fn nominal(self) -> KinematicTemplate {
        match self {
            Family::Sawyer7 => KinematicTemplate {
                links: vec![
                    link("zxy", 0.081, 0.10, 0.317, 0.05, false),
                    link("yxz", 0.0, 0.12, 0.20, 0.045, false),
                    link("zxy", 0.0, 0.12, 0.20, 0.04, true),
                    link("yxz", 0.0, 0.12, 0.20, 0.04, false),
                    link("zxy", 0.0, 0.11, 0.18, 0.035, true),
                    link("yxz", 0.0, 0.11, 0.10, 0.035, false),
                ],
                end_effector: EndEffectorTemplate { base_height: 0.05, base_radius: 0.035, cuboid_scale: 1.0 },
                joints: vec![
                    JointConstraint::new(-3.0, 3.0),
                    JointConstraint::new(-2.2, 2.2),
                    JointConstraint::new(-3.0, 3.0),
                    JointConstraint::new(-2.2, 2.2),
                    JointConstraint::new(-3.0, 3.0),
                    JointConstraint::new(-2.2, 2.2),
                    JointConstraint::new(-3.0, 3.0),
                ],
            },
            Family::Ur6 => KinematicTemplate {
                links: vec![
                    link("zxy", 0.0, 0.135, 0.12, 0.05, false),
                    link("yzy", 0.0, 0.12, 0.40, 0.045, true),
                    link("yzy", 0.0, 0.11, 0.36, 0.04, false),
                    link("yxz", 0.0, 0.11, 0.11, 0.035, false),
                    link("zxy", 0.0, 0.11, 0.11, 0.035, false),
                ],
                end_effector: EndEffectorTemplate { base_height: 0.05, base_radius: 0.035, cuboid_scale: 1.0 },
                joints: vec![
                    JointConstraint::new(-3.1, 3.1),
                    JointConstraint::new(-3.1, 3.1),
                    JointConstraint::new(-2.8, 2.8),
                    JointConstraint::new(-3.1, 3.1),
                    JointConstraint::new(-3.1, 3.1),
                    JointConstraint::new(-3.1, 3.1),
                ],
            },
        }
    }
}

/// Per-parameter spreads for template sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Standard deviation of lengths, relative to nominal (`normal`).
    pub length_rel_std: f64,
    /// Standard deviation of radii, relative to nominal (`normal`).
    pub radius_rel_std: f64,
    /// Standard deviation of joint limits in radians (`normal`).
    pub limit_std: f64,
    /// Lengths drawn from `nominal * [1 - w, 1 + w]` (`uniform`).
    pub length_rel_width: f64,
    /// Radii drawn from `nominal * [1 - w, 1 + w]` (`uniform`).
    pub radius_rel_width: f64,
    /// Joint limits drawn from `nominal ± w` (`uniform`).
    pub limit_width: f64,
    /// Smallest admissible cylinder length or radius, meters.
    pub min_extent: f64,
    pub max_rejections: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            length_rel_std: 0.15,
            radius_rel_std: 0.20,
            limit_std: 0.2,
            length_rel_width: 0.3,
            radius_rel_width: 0.3,
            limit_width: 0.3,
            min_extent: 0.01,
            max_rejections: 100,
        }
    }
}

impl SamplingConfig {
    /// Inclusive bounds a `uniform` draw of a nominal length can take.
    pub fn uniform_length_bounds(&self, nominal: f64) -> (f64, f64) {
        (nominal * (1.0 - self.length_rel_width), nominal * (1.0 + self.length_rel_width))
    }
}

struct Draw<'a> {
    rng: &'a mut ChaCha8Rng,
    strategy: Strategy,
    cfg: &'a SamplingConfig,
}

impl Draw<'_> {
    fn relative(&mut self, nominal: f64, std: f64, width: f64) -> f64 {
        if nominal == 0.0 {
            return 0.0;
        }
        match self.strategy {
            Strategy::Normal => {
                let n: f64 = StandardNormal.sample(self.rng);
                nominal * (1.0 + std * n)
            }
            Strategy::Uniform => nominal * self.rng.random_range(1.0 - width..=1.0 + width),
        }
    }

    fn length(&mut self, nominal: f64) -> f64 {
        self.relative(nominal, self.cfg.length_rel_std, self.cfg.length_rel_width)
    }

    fn radius(&mut self, nominal: f64) -> f64 {
        self.relative(nominal, self.cfg.radius_rel_std, self.cfg.radius_rel_width)
    }

    fn limit(&mut self, nominal: f64) -> f64 {
        match self.strategy {
            Strategy::Normal => {
                let n: f64 = StandardNormal.sample(self.rng);
                nominal + self.cfg.limit_std * n
            }
            Strategy::Uniform => nominal + self.rng.random_range(-self.cfg.limit_width..=self.cfg.limit_width),
        }
    }
}

fn admissible(t: &KinematicTemplate, nominal: &KinematicTemplate, cfg: &SamplingConfig) -> bool {
    if t.validate().is_err() {
        return false;
    }
    let lengths_ok = t.links.iter().zip(&nominal.links).all(|(l, n)| {
        [Axis::X, Axis::Y, Axis::Z]
            .iter()
            .all(|&a| n.length_along(a) == 0.0 || l.length_along(a) >= cfg.min_extent)
            && l.radius >= cfg.min_extent
    });
    let e = &t.end_effector;
    lengths_ok && e.base_height >= cfg.min_extent && e.base_radius >= cfg.min_extent && e.cuboid_scale > 0.1
}

pub fn sample_template(family: Family, strategy: Strategy, seed: u64) -> Result<KinematicTemplate> {
    sample_template_with(family, strategy, seed, &SamplingConfig::default())
}

/// Samples a template of `family`; patterns and chiral flips stay at the
/// family's values and only continuous parameters are drawn.
pub fn sample_template_with(
    family: Family,
    strategy: Strategy,
    seed: u64,
    cfg: &SamplingConfig,
) -> Result<KinematicTemplate> {
    let nominal = family.nominal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.max_rejections {
        let mut d = Draw { rng: &mut rng, strategy, cfg };
        let mut t = nominal.clone();
        for l in &mut t.links {
            for a in [Axis::X, Axis::Y, Axis::Z] {
                let v = d.length(l.length_along(a));
                *l.length_mut(a) = v;
            }
            l.radius = d.radius(l.radius);
        }
        let e = &mut t.end_effector;
        e.base_height = d.length(e.base_height);
        e.base_radius = d.radius(e.base_radius);
        e.cuboid_scale = d.length(e.cuboid_scale);
        for j in &mut t.joints {
            j.lower = d.limit(j.lower);
            j.upper = d.limit(j.upper);
        }
        if admissible(&t, &nominal, cfg) {
            return Ok(t);
        }
    }
    Err(Error::SamplingExhausted(cfg.max_rejections))
}

/// Native on-disk template: the matrix columns plus provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateFile {
    pub family: Option<Family>,
    pub strategy: Option<Strategy>,
    pub seed: Option<u64>,
    pub columns: Vec<[f64; TEMPLATE_ROWS]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<serde_json::Value>,
}

impl TemplateFile {
    pub fn new(template: &KinematicTemplate, family: Option<Family>, strategy: Option<Strategy>, seed: Option<u64>) -> Self {
        Self { family, strategy, seed, columns: template.to_columns(), header: None }
    }

    pub fn template(&self) -> Result<KinematicTemplate> {
        KinematicTemplate::from_columns(&self.columns)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        f.template()?;
        Ok(f)
    }
}

pub fn import_template(json: &str) -> Result<KinematicTemplate> {
    TemplateFile::from_json(json)?.template()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_families_are_valid() {
        for f in [Family::Sawyer7, Family::Ur6] {
            let t = f.nominal();
            t.validate().unwrap();
            assert_eq!(t.dof(), f.dof());
            assert_eq!(t.columns(), f.dof());
        }
    }

    #[test]
    fn sawyer_sample_has_eight_by_seven_matrix() {
        let t = sample_template(Family::Sawyer7, Strategy::Normal, 1).unwrap();
        assert_eq!(t.joints.len(), 7);
        assert_eq!(t.links.len(), 6);
        let cols = t.to_columns();
        assert_eq!(cols.len(), 7);
        assert!(cols.iter().all(|c| c.len() == TEMPLATE_ROWS));
        assert_eq!(cols[6][3..6], [-1.0, -1.0, -1.0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_template(Family::Sawyer7, Strategy::Normal, 1).unwrap();
        let b = sample_template(Family::Sawyer7, Strategy::Normal, 1).unwrap();
        assert_eq!(a, b);
        let c = sample_template(Family::Sawyer7, Strategy::Normal, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_lengths_stay_in_bounds() {
        let cfg = SamplingConfig::default();
        let nominal = Family::Ur6.nominal();
        for seed in 0..50 {
            let t = sample_template(Family::Ur6, Strategy::Uniform, seed).unwrap();
            assert_eq!(t.dof(), 6);
            for (l, n) in t.links.iter().zip(&nominal.links) {
                assert_eq!(l.pattern, n.pattern);
                assert_eq!(l.chiral_flip, n.chiral_flip);
                for a in [Axis::X, Axis::Y, Axis::Z] {
                    let (lo, hi) = cfg.uniform_length_bounds(n.length_along(a));
                    let v = l.length_along(a);
                    assert!(v >= lo && v <= hi, "{v} not in [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn every_sample_chains() {
        for seed in 0..200 {
            for f in [Family::Sawyer7, Family::Ur6] {
                for s in [Strategy::Normal, Strategy::Uniform] {
                    let t = sample_template(f, s, seed).unwrap();
                    assert!(t.chain_violation().is_none());
                }
            }
        }
    }

    #[test]
    fn impossible_constraints_exhaust() {
        let cfg = SamplingConfig { min_extent: 10.0, ..Default::default() };
        let err = sample_template_with(Family::Ur6, Strategy::Normal, 0, &cfg).unwrap_err();
        assert!(matches!(err, Error::SamplingExhausted(100)));
    }

    #[test]
    fn chain_violation_is_rejected() {
        let mut t = Family::Ur6.nominal();
        t.links[1].pattern = "zxy".parse().unwrap();
        assert_eq!(t.chain_violation(), Some(1));
        assert!(t.validate().is_err());
    }

    #[test]
    fn pattern_codes_round_trip() {
        for code in 0..27u8 {
            let p = Pattern::from_code(code).unwrap();
            assert_eq!(p.code(), code);
            assert_eq!(p.to_string().parse::<Pattern>().unwrap(), p);
        }
        assert!("xyw".parse::<Pattern>().is_err());
        assert!("xy".parse::<Pattern>().is_err());
    }

    #[test]
    fn native_file_round_trips() {
        let t = sample_template(Family::Sawyer7, Strategy::Uniform, 9).unwrap();
        let f = TemplateFile::new(&t, Some(Family::Sawyer7), Some(Strategy::Uniform), Some(9));
        let json = f.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["family"], "sawyer7");
        assert_eq!(v["columns"].as_array().unwrap().len(), 7);
        assert_eq!(v["columns"][6][5], -1.0);
        assert_eq!(import_template(&json).unwrap(), t);
    }
}
