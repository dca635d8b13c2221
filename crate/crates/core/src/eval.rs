//! Batch evaluation: grading metrics, the suite runner, and the
//! knowledge-accumulation sweep.
//!
//! Grading is against each task's authored golden sequence and the
//! environment's own success verdict — never the agent's belief. The two
//! step metrics follow one definition of "correct steps": the largest k such
//! that the first k golden operations appear in order (as a subsequence)
//! within the executed operations; completed runs count every golden step as
//! correct.
//!
//! Everything here is deterministic: task order and donor sampling come from
//! a seeded ChaCha8 generator, collections iterate in insertion or sorted
//! order, and reports serialize byte-identically across reruns.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{run_task, AgentConfig, AgentError, RunReport, RunStatus};
use crate::env::{validate_goldens, AppDoc, TaskDef};
use crate::experience::{EdgeKind, ExperienceGraph};
use crate::gui::ActionKind;
use crate::knowledge::KnowledgeBase;
use crate::oracle::Oracle;

/// Operation identity for grading: action, element label, and parameter
/// must all match. Golden entries have placeholders resolved before
/// comparison; ids are run-scoped and deliberately excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricOp {
    pub action: ActionKind,
    pub element: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
}

/// The golden sequence of `task` with placeholders substituted.
///
/// Panics on unresolvable placeholders; app validation guarantees they
/// resolve for every bundled task.
pub fn golden_ops(task: &TaskDef) -> Vec<MetricOp> {
    task.golden
        .iter()
        .map(|step| MetricOp {
            action: step.action,
            element: crate::env::resolve_placeholders(&step.element, &task.parameters)
                .expect("golden element resolves; enforced at app load"),
            parameter: step.parameter.as_ref().map(|p| {
                crate::env::resolve_placeholders(p, &task.parameters)
                    .expect("golden parameter resolves; enforced at app load")
            }),
        })
        .collect()
}

/// Every executed operation of a run, in order, undo steps included.
pub fn executed_ops(graph: &ExperienceGraph) -> Vec<MetricOp> {
    graph
        .edges()
        .iter()
        .map(|e| MetricOp {
            action: e.op.action,
            element: e.element_label.clone(),
            parameter: e.op.parameter.clone(),
        })
        .collect()
}

/// Largest k such that `golden[..k]` is a subsequence of `executed`.
///
/// The greedy scan (match each pending golden op at its earliest occurrence)
/// is exact for prefixes: delaying a match can only discard options.
pub fn correct_steps(golden: &[MetricOp], executed: &[MetricOp]) -> usize {
    let mut k = 0;
    for op in executed {
        if k < golden.len() && *op == golden[k] {
            k += 1;
        }
    }
    k
}

/// Fraction of the golden sequence the run got right, in order; always 1 for
/// completed runs.
pub fn step_accuracy(golden: &[MetricOp], executed: &[MetricOp], completed: bool) -> f64 {
    if completed || golden.is_empty() {
        return 1.0;
    }
    correct_steps(golden, executed) as f64 / golden.len() as f64
}

/// Fraction of executed steps that were wasted: (executed − correct) /
/// executed, where completed runs credit the full golden length. Empty
/// executions count as 0.
pub fn step_redundancy(golden: &[MetricOp], executed: &[MetricOp], completed: bool) -> f64 {
    if executed.is_empty() {
        return 0.0;
    }
    let correct = if completed {
        golden.len()
    } else {
        correct_steps(golden, executed)
    };
    executed.len().saturating_sub(correct) as f64 / executed.len() as f64
}

/// The accumulation experiment's task categories: completed without
/// redundancy, completed with redundancy, not completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Type1,
    Type2,
    Type3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    /// Ground truth from the environment's success condition.
    pub success: bool,
    /// Agent-side outcome; absent when the run errored out entirely.
    pub status: Option<RunStatus>,
    pub via_replay: bool,
    pub executed_steps: usize,
    pub correct_steps: usize,
    pub step_accuracy: f64,
    pub step_redundancy: f64,
    pub backtrack_count: usize,
    pub task_type: TaskType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Full trace for inspection; absent for errored rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunReport>,
}

/// Grades one finished run against its task definition.
pub fn evaluate_run(task: &TaskDef, report: RunReport) -> TaskResult {
    let golden = golden_ops(task);
    let executed = executed_ops(&report.graph);
    let completed = report.ground_truth_success;
    let accuracy = step_accuracy(&golden, &executed, completed);
    let redundancy = step_redundancy(&golden, &executed, completed);
    let task_type = if completed && redundancy == 0.0 {
        TaskType::Type1
    } else if completed {
        TaskType::Type2
    } else {
        TaskType::Type3
    };
    TaskResult {
        task_id: task.id.clone(),
        success: completed,
        status: Some(report.status),
        via_replay: report.via_replay,
        executed_steps: executed.len(),
        correct_steps: if completed {
            golden.len()
        } else {
            correct_steps(&golden, &executed)
        },
        step_accuracy: accuracy,
        step_redundancy: redundancy,
        backtrack_count: report
            .graph
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Undo)
            .count(),
        task_type,
        error: None,
        run: Some(report),
    }
}

#[derive(Debug, Clone)]
pub struct SuiteDefinition {
    pub app: Arc<AppDoc>,
    /// Task ids to run; order is the execution order unless `shuffle`.
    pub task_ids: Vec<String>,
    pub seed: u64,
    /// Shuffle the task order with the seed before running.
    pub shuffle: bool,
    /// Keep one knowledge base across the whole suite instead of giving each
    /// task a fresh one. Off by default-style usage: cross-task knowledge is
    /// an experiment variable, not a baseline condition.
    pub accumulate: bool,
    pub config: AgentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub success_rate: f64,
    pub mean_step_accuracy: f64,
    pub mean_step_redundancy: f64,
    pub non_redundant_completion_rate: f64,
    pub type1: Vec<String>,
    pub type2: Vec<String>,
    pub type3: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub task_order: Vec<String>,
    pub results: Vec<TaskResult>,
    pub aggregates: Aggregates,
}

pub fn aggregate(results: &[TaskResult]) -> Aggregates {
    let n = results.len();
    let mean = |f: &dyn Fn(&TaskResult) -> f64| {
        if n == 0 {
            0.0
        } else {
            results.iter().map(|r| f(r)).sum::<f64>() / n as f64
        }
    };
    let ids_of = |t: TaskType| {
        results
            .iter()
            .filter(|r| r.task_type == t)
            .map(|r| r.task_id.clone())
            .collect::<Vec<_>>()
    };
    let type1 = ids_of(TaskType::Type1);
    Aggregates {
        success_rate: mean(&|r| if r.success { 1.0 } else { 0.0 }),
        mean_step_accuracy: mean(&|r| r.step_accuracy),
        mean_step_redundancy: mean(&|r| r.step_redundancy),
        non_redundant_completion_rate: if n == 0 {
            0.0
        } else {
            type1.len() as f64 / n as f64
        },
        type1,
        type2: ids_of(TaskType::Type2),
        type3: ids_of(TaskType::Type3),
    }
}

/// Runs every task in the suite and grades it. Per-task errors become rows
/// with `error` set; they never abort the batch.
pub fn run_suite(oracle: &Oracle, suite: &SuiteDefinition) -> Result<SuiteReport, AgentError> {
    validate_goldens(&suite.app)?;
    let mut order = suite.task_ids.clone();
    if suite.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(suite.seed));
    }
    let mut kb = KnowledgeBase::new();
    let mut results = Vec::with_capacity(order.len());
    for id in &order {
        if !suite.accumulate {
            kb = KnowledgeBase::new();
        }
        let task = suite.app.tasks.iter().find(|t| t.id == *id);
        let outcome = match task {
            Some(_) => run_task(oracle, &suite.config, &suite.app, id, &mut kb),
            None => Err(AgentError::Env(crate::env::EnvError::Invalid(format!(
                "unknown task id '{id}'"
            )))),
        };
        results.push(match (task, outcome) {
            (Some(task), Ok(report)) => evaluate_run(task, report),
            (_, Err(e)) => TaskResult {
                task_id: id.clone(),
                success: false,
                status: None,
                via_replay: false,
                executed_steps: 0,
                correct_steps: 0,
                step_accuracy: 0.0,
                step_redundancy: 0.0,
                backtrack_count: 0,
                task_type: TaskType::Type3,
                error: Some(e.to_string()),
                run: None,
            },
            (None, Ok(_)) => unreachable!("run_task requires a known task id"),
        });
    }
    let aggregates = aggregate(&results);
    Ok(SuiteReport {
        seed: suite.seed,
        task_order: order,
        results,
        aggregates,
    })
}

// ── knowledge-accumulation sweep ─────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Donor-pool fractions, ascending. Sorted and deduplicated defensively.
    pub fractions: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            repetitions: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub samples: usize,
    pub mean_redundancy: f64,
    pub sd_redundancy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub phase1: SuiteReport,
    /// Knowledge donors: tasks completed without redundancy in phase 1.
    pub donor_pool: Vec<String>,
    /// Tasks under test: completed with redundancy in phase 1.
    pub tested: Vec<String>,
    /// One point per fraction, plus the implicit 0.0 point copied from the
    /// tested tasks' phase-1 results.
    pub points: Vec<SweepPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Measures how donated knowledge changes the redundancy of imperfect tasks.
///
/// Phase 1 runs the suite with per-task fresh knowledge to classify tasks.
/// Then, for every tested (Type-2) task and repetition, a seeded permutation
/// of the donor (Type-1) pool is drawn; each fraction takes a prefix of that
/// permutation (nested samples, so larger fractions strictly contain smaller
/// ones), donors are re-run with knowledge production on and consumption off
/// to fill a fresh knowledge base, and the tested task runs against a copy
/// of it with consumption on. The tested task never appears in its own donor
/// pool — donors and tested tasks are disjoint by construction.
pub fn knowledge_accumulation_sweep(
    oracle: &Oracle,
    suite: &SuiteDefinition,
    config: &SweepConfig,
) -> Result<SweepReport, AgentError> {
    let phase1_suite = SuiteDefinition {
        accumulate: false,
        ..suite.clone()
    };
    let phase1 = run_suite(oracle, &phase1_suite)?;
    let donor_pool = phase1.aggregates.type1.clone();
    let tested = phase1.aggregates.type2.clone();

    let zero_samples: Vec<f64> = phase1
        .results
        .iter()
        .filter(|r| r.task_type == TaskType::Type2)
        .map(|r| r.step_redundancy)
        .collect();
    let mut points = vec![point_from(0.0, &zero_samples)];

    if donor_pool.is_empty() || tested.is_empty() {
        let reason = if donor_pool.is_empty() {
            "no donor tasks: nothing completed without redundancy in phase 1"
        } else {
            "no tested tasks: nothing completed with redundancy in phase 1"
        };
        return Ok(SweepReport {
            phase1,
            donor_pool,
            tested,
            points: Vec::new(),
            skipped: Some(reason.to_string()),
        });
    }

    let mut fractions = config.fractions.clone();
    fractions.retain(|f| *f > 0.0);
    fractions.sort_by(|a, b| a.total_cmp(b));
    fractions.dedup();

    let donor_config = AgentConfig {
        enable_knowledge: false,
        summarize: true,
        ..suite.config.clone()
    };
    let tested_config = AgentConfig {
        enable_knowledge: true,
        ..suite.config.clone()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); fractions.len()];
    for b in &tested {
        let task = suite
            .app
            .tasks
            .iter()
            .find(|t| t.id == *b)
            .expect("tested ids come from phase-1 rows");
        for _ in 0..config.repetitions {
            let mut permutation = donor_pool.clone();
            permutation.shuffle(&mut rng);
            let mut kb = KnowledgeBase::new();
            let mut built = 0usize;
            for (i, fraction) in fractions.iter().enumerate() {
                let want = ((fraction * donor_pool.len() as f64).round() as usize)
                    .min(donor_pool.len());
                while built < want {
                    run_task(oracle, &donor_config, &suite.app, &permutation[built], &mut kb)?;
                    built += 1;
                }
                let mut scratch = kb.clone();
                let report = run_task(oracle, &tested_config, &suite.app, b, &mut scratch)?;
                let result = evaluate_run(task, report);
                samples[i].push(result.step_redundancy);
            }
        }
    }

    for (fraction, sample) in fractions.iter().zip(&samples) {
        points.push(point_from(*fraction, sample));
    }
    Ok(SweepReport {
        phase1,
        donor_pool,
        tested,
        points,
        skipped: None,
    })
}

fn point_from(fraction: f64, samples: &[f64]) -> SweepPoint {
    let n = samples.len();
    let mean = if n == 0 {
        0.0
    } else {
        samples.iter().sum::<f64>() / n as f64
    };
    let sd = if n == 0 {
        0.0
    } else {
        (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    SweepPoint {
        fraction,
        samples: n,
        mean_redundancy: mean,
        sd_redundancy: sd,
    }
}

// ── report rendering ─────────────────────────────────────────────────────

/// Human-readable per-task table with an aggregate footer. Columns carry the
/// four headline rates; per-task rows show their per-task counterparts.
pub fn render_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>12} {:>14} {:>21} {:>30}\n",
        "Task", "Success Rate", "Step Accuracy", "Step Redundancy Rate", "Non-redundant Completion Rate"
    ));
    out.push_str(&format!("{}\n", "-".repeat(105)));
    for r in &report.results {
        out.push_str(&format!(
            "{:<24} {:>12} {:>14.4} {:>21.4} {:>30}\n",
            r.task_id,
            if r.success { "yes" } else { "no" },
            r.step_accuracy,
            r.step_redundancy,
            if r.task_type == TaskType::Type1 { "yes" } else { "no" },
        ));
    }
    if !report.results.is_empty() {
        let a = &report.aggregates;
        out.push_str(&format!("{}\n", "-".repeat(105)));
        out.push_str(&format!(
            "{:<24} {:>12.4} {:>14.4} {:>21.4} {:>30.4}\n",
            format!("ALL ({} tasks)", report.results.len()),
            a.success_rate,
            a.mean_step_accuracy,
            a.mean_step_redundancy,
            a.non_redundant_completion_rate,
        ));
    }
    out
}

/// Human-readable fraction table for a sweep.
pub fn render_sweep_table(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>17} {:>15}\n",
        "Fraction", "Samples", "Mean Redundancy", "Std Deviation"
    ));
    out.push_str(&format!("{}\n", "-".repeat(53)));
    for p in &report.points {
        out.push_str(&format!(
            "{:<10.2} {:>8} {:>17.4} {:>15.4}\n",
            p.fraction, p.samples, p.mean_redundancy, p.sd_redundancy
        ));
    }
    if let Some(reason) = &report.skipped {
        out.push_str(&format!("sweep skipped: {reason}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::load_app_from_str;
    use crate::oracle::heuristic::HeuristicOracle;
    use rand::Rng;

    fn op(action: ActionKind, element: &str, parameter: Option<&str>) -> MetricOp {
        MetricOp {
            action,
            element: element.to_string(),
            parameter: parameter.map(str::to_string),
        }
    }

    fn clicks(labels: &[&str]) -> Vec<MetricOp> {
        labels.iter().map(|l| op(ActionKind::Click, l, None)).collect()
    }

    #[test]
    fn step_accuracy_matches_the_worked_examples() {
        let golden = clicks(&["a", "b", "c"]);
        assert_eq!(step_accuracy(&golden, &clicks(&["a", "x", "b"]), false), 2.0 / 3.0);
        assert_eq!(step_accuracy(&golden, &[], false), 0.0);
        let two = clicks(&["a", "b"]);
        assert_eq!(step_accuracy(&two, &clicks(&["b", "a"]), false), 0.5);
        // Completed runs always grade 1, whatever was executed.
        assert_eq!(step_accuracy(&golden, &clicks(&["z"]), true), 1.0);
    }

    #[test]
    fn op_equality_covers_action_element_and_parameter() {
        let golden = vec![op(ActionKind::TextInput, "Name", Some("Bob"))];
        let wrong_param = vec![op(ActionKind::TextInput, "Name", Some("Ann"))];
        let wrong_action = vec![op(ActionKind::Click, "Name", Some("Bob"))];
        let right = vec![op(ActionKind::TextInput, "Name", Some("Bob"))];
        assert_eq!(correct_steps(&golden, &wrong_param), 0);
        assert_eq!(correct_steps(&golden, &wrong_action), 0);
        assert_eq!(correct_steps(&golden, &right), 1);
    }

    #[test]
    fn step_redundancy_matches_the_worked_examples() {
        let golden3 = clicks(&["a", "b", "c"]);
        assert_eq!(step_redundancy(&golden3, &clicks(&["a", "b", "c"]), true), 0.0);
        assert_eq!(
            step_redundancy(&golden3, &clicks(&["a", "x", "y", "b", "c"]), true),
            2.0 / 5.0
        );
        // Incomplete, 2 correct of 6 executed.
        let golden = clicks(&["a", "b", "z"]);
        let executed = clicks(&["a", "b", "x", "x", "x", "x"]);
        assert_eq!(step_redundancy(&golden, &executed, false), 4.0 / 6.0);
        assert_eq!(step_redundancy(&golden, &[], false), 0.0);
    }

    /// Brute-force oracle: try every k from |golden| down, checking the
    /// prefix embeds as a subsequence.
    fn correct_steps_exhaustive(golden: &[MetricOp], executed: &[MetricOp]) -> usize {
        fn is_subsequence(needle: &[MetricOp], hay: &[MetricOp]) -> bool {
            let mut it = hay.iter();
            needle.iter().all(|n| it.any(|h| h == n))
        }
        (0..=golden.len())
            .rev()
            .find(|k| is_subsequence(&golden[..*k], executed))
            .unwrap_or(0)
    }

    #[test]
    fn greedy_correct_steps_matches_brute_force_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let random_op = |rng: &mut ChaCha8Rng| {
            let actions = [ActionKind::Click, ActionKind::TextInput, ActionKind::ScrollForward];
            let elements = ["a", "b", "c"];
            let params = [None, Some("x"), Some("y")];
            op(
                actions[rng.gen_range(0..actions.len())],
                elements[rng.gen_range(0..elements.len())],
                params[rng.gen_range(0..params.len())],
            )
        };
        for _ in 0..1000 {
            let golden: Vec<MetricOp> =
                (0..rng.gen_range(1..=8)).map(|_| random_op(&mut rng)).collect();
            let executed: Vec<MetricOp> =
                (0..rng.gen_range(0..=12)).map(|_| random_op(&mut rng)).collect();
            assert_eq!(
                correct_steps(&golden, &executed),
                correct_steps_exhaustive(&golden, &executed),
                "golden {golden:?} executed {executed:?}"
            );
        }
    }

    /// Three tasks on a settings-like app: two land directly (donors), one
    /// is lured into an apps page by token overlap and needs a backtrack.
    fn toggles_app() -> Arc<AppDoc> {
        load_app_from_str(
            &serde_json::json!({
                "name": "toggles",
                "initial_page": "home",
                "pages": {
                    "home": {"elements": [
                        {"role": "label", "text": "Settings"},
                        {"role": "container", "children": [
                            {"role": "button", "text": "Apps", "desc": "app data usage"},
                            {"role": "button", "text": "Network", "desc": "wifi and bluetooth connections"}
                        ]}
                    ]},
                    "apps": {"elements": [
                        {"role": "label", "text": "App list"}
                    ]},
                    "net": {"elements": [
                        {"role": "label", "text": "Network"},
                        {"role": "button", "text": "Wifi"},
                        {"role": "button", "text": "Bluetooth"},
                        {"role": "button", "text": "Mobile data"}
                    ]},
                    "wifi": {"elements": [{"role": "label", "text": "Wifi enabled"}]},
                    "bt": {"elements": [{"role": "label", "text": "Bluetooth enabled"}]},
                    "data": {"elements": [{"role": "label", "text": "Mobile data enabled"}]}
                },
                "transitions": [
                    {"from": "home", "element": "Apps", "to": "apps"},
                    {"from": "home", "element": "Network", "to": "net"},
                    {"from": "net", "element": "Wifi", "to": "wifi"},
                    {"from": "net", "element": "Bluetooth", "to": "bt"},
                    {"from": "net", "element": "Mobile data", "to": "data"}
                ],
                "tasks": [
                    {"id": "wifi_on", "command": "enable wifi",
                     "completion_cue": "Wifi enabled",
                     "golden": [
                        {"action": "click", "element": "Network"},
                        {"action": "click", "element": "Wifi"}
                     ]},
                    {"id": "bt_on", "command": "enable bluetooth",
                     "completion_cue": "Bluetooth enabled",
                     "golden": [
                        {"action": "click", "element": "Network"},
                        {"action": "click", "element": "Bluetooth"}
                     ]},
                    {"id": "data_on", "command": "enable mobile data",
                     "completion_cue": "Mobile data enabled",
                     "golden": [
                        {"action": "click", "element": "Network"},
                        {"action": "click", "element": "Mobile data"}
                     ]}
                ]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn oracle_for(app: &AppDoc) -> Oracle {
        Oracle::new(Arc::new(HeuristicOracle::for_app(app)))
    }

    fn toggles_suite() -> SuiteDefinition {
        let app = toggles_app();
        SuiteDefinition {
            task_ids: app.tasks.iter().map(|t| t.id.clone()).collect(),
            app,
            seed: 0,
            shuffle: false,
            accumulate: false,
            config: AgentConfig::default(),
        }
    }

    #[test]
    fn suite_grades_direct_and_detoured_tasks() {
        let suite = toggles_suite();
        let oracle = oracle_for(&suite.app);
        let report = run_suite(&oracle, &suite).unwrap();

        let by_id = |id: &str| report.results.iter().find(|r| r.task_id == id).unwrap();
        let wifi = by_id("wifi_on");
        assert!(wifi.success);
        assert_eq!(wifi.task_type, TaskType::Type1);
        assert_eq!((wifi.step_accuracy, wifi.step_redundancy), (1.0, 0.0));
        assert_eq!(wifi.executed_steps, 2);
        assert_eq!(by_id("bt_on").task_type, TaskType::Type1);

        // The data task is lured into the apps page first: four executed
        // steps against a two-step golden.
        let data = by_id("data_on");
        assert!(data.success);
        assert_eq!(data.task_type, TaskType::Type2);
        assert_eq!(data.executed_steps, 4);
        assert_eq!(data.step_redundancy, 0.5);
        assert_eq!(data.backtrack_count, 1);

        let a = &report.aggregates;
        assert_eq!(a.success_rate, 1.0);
        assert_eq!(a.mean_step_accuracy, 1.0);
        assert_eq!(a.mean_step_redundancy, 0.5 / 3.0);
        assert_eq!(a.non_redundant_completion_rate, 2.0 / 3.0);
        assert_eq!(a.type1, vec!["wifi_on", "bt_on"]);
        assert_eq!(a.type2, vec!["data_on"]);
        assert!(a.type3.is_empty());
        // Aggregates recompute from rows.
        assert_eq!(*a, aggregate(&report.results));
    }

    #[test]
    fn unknown_task_ids_become_error_rows_not_aborts() {
        let mut suite = toggles_suite();
        suite.task_ids = vec!["wifi_on".into(), "missing".into(), "bt_on".into()];
        let oracle = oracle_for(&suite.app);
        let report = run_suite(&oracle, &suite).unwrap();
        assert_eq!(report.results.len(), 3);
        let bad = &report.results[1];
        assert!(!bad.success);
        assert!(bad.error.as_deref().unwrap().contains("missing"));
        assert_eq!(bad.task_type, TaskType::Type3);
        assert!(report.results[2].success, "later tasks still run");
    }

    #[test]
    fn shuffle_reorders_tasks_reproducibly() {
        let mut suite = toggles_suite();
        suite.shuffle = true;
        let oracle = oracle_for(&suite.app);
        let a = run_suite(&oracle, &suite).unwrap();
        let b = run_suite(&oracle, &suite).unwrap();
        assert_eq!(a.task_order, b.task_order);
        suite.seed = 1;
        let c = run_suite(&oracle, &suite).unwrap();
        assert_eq!(
            {
                let mut s = c.task_order.clone();
                s.sort();
                s
            },
            vec!["bt_on", "data_on", "wifi_on"],
            "same tasks, any order"
        );
    }

    #[test]
    fn suite_reports_serialize_byte_identically() {
        let suite = toggles_suite();
        let oracle = oracle_for(&suite.app);
        let a = serde_json::to_string(&run_suite(&oracle, &suite).unwrap()).unwrap();
        let b = serde_json::to_string(&run_suite(&oracle, &suite).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_reduces_redundancy_as_donors_accumulate() {
        let suite = toggles_suite();
        let oracle = oracle_for(&suite.app);
        let config = SweepConfig {
            fractions: vec![0.5, 1.0],
            repetitions: 3,
            seed: 0,
        };
        let sweep = knowledge_accumulation_sweep(&oracle, &suite, &config).unwrap();
        assert!(sweep.skipped.is_none());
        assert_eq!(sweep.donor_pool, vec!["wifi_on", "bt_on"]);
        assert_eq!(sweep.tested, vec!["data_on"]);

        // Fraction 0 carries the phase-1 redundancy; one donor already
        // supplies the transition record whose reachable-target annotation
        // steers the first click to Network, eliminating the detour.
        let summary: Vec<(f64, usize, f64)> = sweep
            .points
            .iter()
            .map(|p| (p.fraction, p.samples, p.mean_redundancy))
            .collect();
        assert_eq!(summary, vec![(0.0, 1, 0.5), (0.5, 3, 0.0), (1.0, 3, 0.0)]);
        assert!(sweep.points.iter().all(|p| p.sd_redundancy == 0.0));
        // Non-increasing across the curve.
        assert!(sweep
            .points
            .windows(2)
            .all(|w| w[1].mean_redundancy <= w[0].mean_redundancy));
    }

    #[test]
    fn sweep_without_donors_is_skipped_with_a_notice() {
        // An app whose only task detours can donate nothing.
        let app = toggles_app();
        let suite = SuiteDefinition {
            task_ids: vec!["data_on".into()],
            app,
            seed: 0,
            shuffle: false,
            accumulate: false,
            config: AgentConfig::default(),
        };
        let oracle = oracle_for(&suite.app);
        let sweep =
            knowledge_accumulation_sweep(&oracle, &suite, &SweepConfig::default()).unwrap();
        assert!(sweep.skipped.as_deref().unwrap().contains("no donor tasks"));
        assert!(sweep.points.is_empty());
        assert_eq!(sweep.tested, vec!["data_on"]);
    }

    #[test]
    fn accumulation_turns_repeat_intents_into_replays() {
        // Same app, two import-like tasks: with accumulation the second one
        // replays the first one's sequence; without it both explore.
        let app = toggles_app();
        let mut suite = SuiteDefinition {
            task_ids: vec!["wifi_on".into(), "wifi_on".into()],
            app,
            seed: 0,
            shuffle: false,
            accumulate: true,
            config: AgentConfig::default(),
        };
        let oracle = oracle_for(&suite.app);
        let report = run_suite(&oracle, &suite).unwrap();
        assert!(!report.results[0].via_replay);
        assert!(report.results[1].via_replay);
        assert_eq!(report.results[1].task_type, TaskType::Type1);

        suite.accumulate = false;
        let report = run_suite(&oracle, &suite).unwrap();
        assert!(!report.results[1].via_replay);
    }

    #[test]
    fn tables_render_headers_rows_and_aggregates() {
        let suite = toggles_suite();
        let oracle = oracle_for(&suite.app);
        let report = run_suite(&oracle, &suite).unwrap();
        let table = render_table(&report);
        assert!(table.contains("Success Rate"));
        assert!(table.contains("Step Redundancy Rate"));
        assert!(table.contains("Non-redundant Completion Rate"));
        assert!(table.contains("data_on"));
        assert!(table.contains("ALL (3 tasks)"));

        let empty = SuiteReport {
            seed: 0,
            task_order: Vec::new(),
            results: Vec::new(),
            aggregates: aggregate(&[]),
        };
        let table = render_table(&empty);
        assert!(table.contains("Success Rate"));
        assert!(!table.contains("ALL"));
        assert_eq!(table.lines().count(), 2, "headers only");

        // A one-task suite's aggregate row equals its single task row.
        let one = SuiteDefinition {
            task_ids: vec!["wifi_on".into()],
            ..toggles_suite()
        };
        let report = run_suite(&oracle, &one).unwrap();
        let a = &report.aggregates;
        let r = &report.results[0];
        assert_eq!(a.success_rate, if r.success { 1.0 } else { 0.0 });
        assert_eq!(a.mean_step_accuracy, r.step_accuracy);
        assert_eq!(a.mean_step_redundancy, r.step_redundancy);
    }
}
