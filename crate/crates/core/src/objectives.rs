//! Cost functions scoring a candidate variant set over an environment scope.
//!
//! Two objectives are supported:
//!
//! * library: geometric mean over environments of the best-in-set slowdown
//!   over oracle. Relative slowdowns avoid biasing the tuning toward
//!   absolutely slow devices and inputs.
//! * fleet: the rate at which a quantity-weighted fleet of devices completes
//!   quantity-weighted input batches, using absolute runtimes. Selectors
//!   minimize its reciprocal.
//!
//! Both are pure functions of immutable inputs and safe to evaluate
//! concurrently. The library objective is invariant under scaling any single
//! environment's runtimes; the fleet objective deliberately is not.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{KernelInput, SlowdownMatrix};
use crate::error::{Error, Result};

/// Quantity weights for the fleet objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FleetSpecDoc", into = "FleetSpecDoc")]
pub struct FleetSpec {
    device_quantity: BTreeMap<String, f64>,
    input_quantity: BTreeMap<KernelInput, f64>,
}

impl FleetSpec {
    pub fn new(
        device_quantity: BTreeMap<String, f64>,
        input_quantity: BTreeMap<KernelInput, f64>,
    ) -> Result<Self> {
        for (name, q) in &device_quantity {
            if !(q.is_finite() && *q > 0.0) {
                return Err(Error::InvalidJob(format!(
                    "device quantity for {name:?} must be > 0, got {q}"
                )));
            }
        }
        for (input, q) in &input_quantity {
            if !(q.is_finite() && *q > 0.0) {
                return Err(Error::InvalidJob(format!(
                    "input quantity for {input} must be > 0, got {q}"
                )));
            }
        }
        Ok(FleetSpec {
            device_quantity,
            input_quantity,
        })
    }

    /// Quantity 1.0 for every device and input in the matrix.
    pub fn uniform(sm: &SlowdownMatrix) -> Self {
        let mut device_quantity = BTreeMap::new();
        let mut input_quantity = BTreeMap::new();
        for env in sm.environments() {
            device_quantity.insert(env.device.name.clone(), 1.0);
            input_quantity.insert(env.input, 1.0);
        }
        FleetSpec {
            device_quantity,
            input_quantity,
        }
    }

    pub fn device_quantity(&self, name: &str) -> Option<f64> {
        self.device_quantity.get(name).copied()
    }

    pub fn input_quantity(&self, input: &KernelInput) -> Option<f64> {
        self.input_quantity.get(input).copied()
    }
}

/// Wire form: device names and "MxNxK" input keys mapped to quantities.
#[derive(Serialize, Deserialize)]
struct FleetSpecDoc {
    devices: BTreeMap<String, f64>,
    inputs: BTreeMap<String, f64>,
}

impl TryFrom<FleetSpecDoc> for FleetSpec {
    type Error = Error;

    fn try_from(doc: FleetSpecDoc) -> Result<Self> {
        let mut inputs = BTreeMap::new();
        for (key, q) in doc.inputs {
            let input = KernelInput::parse_key(&key).ok_or_else(|| {
                Error::InvalidJob(format!("bad input key {key:?}, expected MxNxK"))
            })?;
            inputs.insert(input, q);
        }
        FleetSpec::new(doc.devices, inputs)
    }
}

impl From<FleetSpec> for FleetSpecDoc {
    fn from(spec: FleetSpec) -> Self {
        FleetSpecDoc {
            devices: spec.device_quantity,
            inputs: spec
                .input_quantity
                .into_iter()
                .map(|(i, q)| (i.to_string(), q))
                .collect(),
        }
    }
}

/// Cost-function selector. The library geomean is minimized directly; the
/// fleet rate is maximized by minimizing its reciprocal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    LibraryGeomean,
    FleetRate { fleet: FleetSpec },
}

/// A candidate variant set: unique, sorted column indices into a matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateSet {
    indices: Vec<usize>,
}

impl CandidateSet {
    pub fn new(mut indices: Vec<usize>, n_variants: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        indices.sort_unstable();
        indices.dedup();
        if let Some(&max) = indices.last() {
            if max >= n_variants {
                return Err(Error::VariantOutOfRange {
                    index: max,
                    variants: n_variants,
                });
            }
        }
        Ok(CandidateSet { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Best (minimum) slowdown among the set's variants on one matrix row.
#[inline]
pub fn best_slowdown(sm: &SlowdownMatrix, row: usize, set: &CandidateSet) -> f64 {
    let r = sm.row(row);
    let mut best = f64::INFINITY;
    for &v in set.indices() {
        if r[v] < best {
            best = r[v];
        }
    }
    best
}

fn check_set(sm: &SlowdownMatrix, set: &CandidateSet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let max = *set.indices().last().expect("non-empty");
    if max >= sm.n_variants() {
        return Err(Error::VariantOutOfRange {
            index: max,
            variants: sm.n_variants(),
        });
    }
    Ok(())
}

/// Geometric mean over `scope` of the per-environment best-in-set slowdown.
///
/// Computed in log space so long scopes with large penalties cannot
/// overflow. Always >= 1.0; equals 1.0 exactly when the set contains an
/// oracle-tying variant for every environment in scope.
pub fn library_cost(sm: &SlowdownMatrix, set: &CandidateSet, scope: &[usize]) -> Result<f64> {
    if scope.is_empty() {
        return Err(Error::EmptyScope);
    }
    check_set(sm, set)?;
    let mut log_sum = 0.0;
    for &e in scope {
        log_sum += best_slowdown(sm, e, set).ln();
    }
    Ok((log_sum / scope.len() as f64).exp())
}

/// Task completion rate of a quantity-weighted fleet, in tasks per
/// millisecond:
///
/// ```text
/// sum over devices d of  quantity(d) / sum over inputs i of y'(d,i) * quantity(i)
/// ```
///
/// where y' is the runtime of the set's best variant on (d, i). Unmeasured
/// cells contribute penalty slowdown x oracle runtime. Each device's inner
/// sum ranges over that device's scope environments only, so a "task" is one
/// pass over the inputs measured for the device.
pub fn fleet_rate(
    sm: &SlowdownMatrix,
    scope: &[usize],
    set: &CandidateSet,
    fleet: &FleetSpec,
) -> Result<f64> {
    if scope.is_empty() {
        return Err(Error::EmptyScope);
    }
    check_set(sm, set)?;

    let mut denom_by_device: BTreeMap<&str, f64> = BTreeMap::new();
    for &e in scope {
        let env = &sm.environments()[e];
        let q_input = fleet
            .input_quantity(&env.input)
            .ok_or_else(|| Error::FleetQuantityMissing {
                what: format!("input {}", env.input),
            })?;
        if fleet.device_quantity(&env.device.name).is_none() {
            return Err(Error::FleetQuantityMissing {
                what: format!("device {:?}", env.device.name),
            });
        }
        let runtime = best_slowdown(sm, e, set) * sm.oracle_ms(e);
        *denom_by_device.entry(env.device.name.as_str()).or_insert(0.0) +=
            runtime * q_input;
    }

    let mut rate = 0.0;
    for (name, denom) in denom_by_device {
        let q_device = fleet
            .device_quantity(name)
            .expect("checked while accumulating");
        rate += q_device / denom;
    }
    Ok(rate)
}

/// Minimization-oriented scalar consumed by every selector: the library
/// geomean itself, or the reciprocal fleet rate.
pub fn cost(
    objective: &Objective,
    sm: &SlowdownMatrix,
    set: &CandidateSet,
    scope: &[usize],
) -> Result<f64> {
    match objective {
        Objective::LibraryGeomean => library_cost(sm, set, scope),
        Objective::FleetRate { fleet } => Ok(1.0 / fleet_rate(sm, scope, set, fleet)?),
    }
}
