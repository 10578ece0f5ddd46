//! Demonstration generation: problem, plan, shortcut, re-time, persist.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{retime, Path, RETIME_STEP};
use super::problem::{embodiment_template, make_problem, make_problem_for, sample_endpoint_poses, PlanningProblem, ProblemConfig};
use super::rrt::{plan, PlannerConfig};
use crate::collision::{generate_scene, SceneConfig};
use crate::dataset::{derive_seed, read_jsonl, write_jsonl, DatasetHeader};
use crate::error::{Error, Result};
use crate::robot::{compile_robot, Family, FrameAssignment, Strategy, TemplateFile};
use crate::{RobotModel, Scene};

pub const DEMOS_KIND: &str = "demos";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub n: usize,
    pub family: Family,
    pub strategy: Strategy,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    /// Fresh problems tried for one record before it is given up.
    #[serde(default = "default_replacements")]
    pub max_replacements: usize,
    /// Use this one robot for every demonstration instead of sampling.
    #[serde(default)]
    pub embodiment: Option<TemplateFile>,
}

fn default_replacements() -> usize {
    10
}

impl DemoConfig {
    pub fn new(n: usize, family: Family, strategy: Strategy, scene: SceneConfig) -> Self {
        Self {
            n,
            family,
            strategy,
            scene,
            planner: PlannerConfig::default(),
            problem: ProblemConfig::default(),
            max_replacements: default_replacements(),
            embodiment: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub template: TemplateFile,
    pub frames: FrameAssignment,
    pub scene: Scene,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub goal_ee_9d: [f64; 9],
    pub waypoints: Vec<Vec<f64>>,
    pub plan_time_s: Option<f64>,
    pub path_length: f64,
}

impl DemoRecord {
    pub fn robot(&self) -> Result<RobotModel> {
        compile_robot(&self.template.template()?)
    }

    pub fn goal_ee(&self) -> Result<crate::Pose> {
        crate::se3::from_9d(&crate::Pose9D::from_slice(&self.goal_ee_9d)?)
    }

    /// The planning problem this demonstration solves.
    pub fn problem(&self) -> Result<PlanningProblem> {
        Ok(PlanningProblem {
            template: self.template.clone(),
            frames: self.frames.clone(),
            scene: self.scene.clone(),
            start: self.start.clone(),
            goal: self.goal.clone(),
            goal_ee: self.goal_ee()?,
            embodiment_attempts: 1,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoFailure {
    pub index: usize,
    pub attempt: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoDataset {
    pub header: DatasetHeader,
    pub records: Vec<DemoRecord>,
    pub failures: Vec<DemoFailure>,
}

impl DemoDataset {
    /// True when some requested record could not be produced.
    pub fn is_partial(&self, requested: usize) -> bool {
        self.records.len() < requested
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        write_jsonl(w, &self.header, &self.records)
    }

    pub fn read<B: BufRead>(r: B) -> Result<Self> {
        let (header, records) = read_jsonl(r)?;
        Ok(Self { header, records, failures: Vec::new() })
    }
}

const SCENE_STREAM: u64 = 10;
const ENDPOINT_STREAM: u64 = 11;
const PROBLEM_STREAM: u64 = 12;
const PLAN_STREAM: u64 = 13;

/// One full pipeline run for a given seed.
pub fn generate_demo(config: &DemoConfig, seed: u64) -> Result<DemoRecord> {
    let mut scene_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SCENE_STREAM]));
    let scene: Scene = generate_scene(&config.scene, &mut scene_rng)?;
    let problem_seed = derive_seed(seed, &[PROBLEM_STREAM]);
    // endpoints come from the first embodiment make_problem will try
    let reference = match &config.embodiment {
        Some(t) => t.clone(),
        None => embodiment_template(config.family, config.strategy, problem_seed, 0)?,
    };
    let robot = compile_robot(&reference.template()?)?;
    let (ee_start, ee_goal) = sample_endpoint_poses(&robot, &scene, derive_seed(seed, &[ENDPOINT_STREAM]))?;
    let problem = match &config.embodiment {
        Some(t) => make_problem_for(t, &scene, &ee_start, &ee_goal, problem_seed, &config.problem)?,
        None => make_problem(config.family, config.strategy, &scene, &ee_start, &ee_goal, problem_seed, &config.problem)?,
    };
    demo_from_problem(&problem, &config.planner, derive_seed(seed, &[PLAN_STREAM]))
}

pub fn demo_from_problem(problem: &PlanningProblem, planner: &PlannerConfig, seed: u64) -> Result<DemoRecord> {
    let robot = problem.robot()?;
    let path: Path = plan(problem, planner, seed)?;
    let timed = retime(&robot, &problem.scene, &path, RETIME_STEP)?;
    Ok(DemoRecord {
        template: problem.template.clone(),
        frames: problem.frames.clone(),
        scene: problem.scene.clone(),
        start: problem.start.clone(),
        goal: problem.goal.clone(),
        goal_ee_9d: problem.goal_ee.to_9d().to_array(),
        path_length: timed.length(),
        plan_time_s: path.plan_time_s,
        waypoints: timed.waypoints,
    })
}

fn generate_slot(config: &DemoConfig, master_seed: u64, index: usize) -> (Option<DemoRecord>, Vec<DemoFailure>) {
    let mut failures = Vec::new();
    for attempt in 0..config.max_replacements.max(1) {
        let seed = derive_seed(master_seed, &[index as u64, attempt as u64]);
        match generate_demo(config, seed) {
            Ok(r) => return (Some(r), failures),
            Err(e) => {
                log::info!("demo {index} attempt {attempt} failed: {e}");
                failures.push(DemoFailure { index, attempt, reason: e.to_string() });
            }
        }
    }
    (None, failures)
}

/// Generates `config.n` demonstrations on `workers` threads. Records are
/// merged in index order, so the worker count never changes the output.
pub fn gen_demos(config: &DemoConfig, master_seed: u64, workers: usize) -> Result<DemoDataset> {
    config.scene.validate()?;
    let header = DatasetHeader::new(DEMOS_KIND, config, master_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let slots: Vec<_> =
        pool.install(|| (0..config.n).into_par_iter().map(|i| generate_slot(config, master_seed, i)).collect());
    let mut records = Vec::with_capacity(config.n);
    let mut failures = Vec::new();
    for (record, fails) in slots {
        records.extend(record);
        failures.extend(fails);
    }
    Ok(DemoDataset { header, records, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_roundtrips_through_jsonl() {
        let cfg = DemoConfig { n: 2, ..DemoConfig::new(2, Family::Ur6, Strategy::Normal, SceneConfig::empty()) };
        let ds = gen_demos(&cfg, 11, 2).unwrap();
        assert_eq!(ds.records.len(), 2);
        let mut buf = Vec::new();
        ds.write(&mut buf).unwrap();
        let back = DemoDataset::read(buf.as_slice()).unwrap();
        assert_eq!(back.records, ds.records);
        assert_eq!(back.header, ds.header);
        let g = ds.records[0].goal_ee().unwrap();
        assert!(g.is_valid(1e-9));
    }
}
