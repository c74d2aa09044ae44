//! Numeric integration of the combined base + tangent system, conservation
//! monitoring, and the finite-difference oracle for the variational
//! equations.
//!
//! Integration is classic fixed-step fourth-order Runge-Kutta on the
//! state `[q.., v.., eps.., w..]`. At every right-hand-side evaluation the
//! accelerations are obtained by solving the mass-matrix systems
//! `M vdot = F` and `M wdot = G` numerically; a condition estimate above
//! `1e12` aborts the run with a singular-mass diagnostic.

use std::collections::HashMap;
use std::io;

use thiserror::Error;

use crate::model::{InitialState, SystemDef};
use crate::prolongation::{
    euler_lagrange, mass_matrix, solved_accelerations, variational_raw, DerivationError,
    MAX_SYMBOLIC_N,
};
use crate::symbolic::{CompiledExpr, EvalError, Expression, Symbol, SymbolKind};
use crate::symmetry::Charge;

/// Condition-estimate threshold above which the mass matrix is treated as
/// numerically singular.
pub const SINGULAR_CONDITION_LIMIT: f64 = 1e12;

/// Dense trajectory storage is capped at this many rows; longer runs store
/// a strided subset while charges are still monitored at full resolution.
pub const TRAJECTORY_ROW_CAP: usize = 10_000_000;

/// State layout of the combined system: `[q^1..q^n, v^1..v^n,
/// eps^1..eps^n, w^1..w^n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    coords: Vec<String>,
}

impl StateLayout {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn dim(&self) -> usize {
        4 * self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn q_slot(&self, i: usize) -> usize {
        i
    }

    pub fn v_slot(&self, i: usize) -> usize {
        self.n() + i
    }

    pub fn eps_slot(&self, i: usize) -> usize {
        2 * self.n() + i
    }

    pub fn w_slot(&self, i: usize) -> usize {
        3 * self.n() + i
    }
}

/// Slot table mapping every symbol of a system (state, placeholders,
/// parameters) to an index in a flat evaluation buffer.
#[derive(Debug, Clone)]
struct Slots {
    index: HashMap<Symbol, usize>,
    template: Vec<f64>,
    n: usize,
}

impl Slots {
    fn new(sys: &SystemDef) -> Slots {
        let n = sys.n();
        let mut index = HashMap::new();
        let mut template = Vec::new();
        let push = |sym: Symbol, index: &mut HashMap<Symbol, usize>, template: &mut Vec<f64>| {
            index.insert(sym, template.len());
            template.push(0.0);
        };
        push(Symbol::time(), &mut index, &mut template);
        for i in 0..n {
            push(sys.coord(i), &mut index, &mut template);
        }
        for i in 0..n {
            push(sys.velocity(i), &mut index, &mut template);
        }
        for i in 0..n {
            push(sys.deviation(i), &mut index, &mut template);
        }
        for i in 0..n {
            push(sys.deviation_velocity(i), &mut index, &mut template);
        }
        for i in 0..n {
            push(sys.acceleration(i), &mut index, &mut template);
        }
        for i in 0..n {
            push(sys.deviation_acceleration(i), &mut index, &mut template);
        }
        for (name, value) in sys.params() {
            index.insert(Symbol::parameter(name), template.len());
            template.push(*value);
        }
        Slots { index, template, n }
    }

    fn compile(&self, e: &Expression) -> Result<CompiledExpr, EvalError> {
        e.compile(&|s: &Symbol| self.index.get(s).copied())
    }

    /// Write `t` and the state blocks into an evaluation buffer.
    fn load_state(&self, buf: &mut [f64], t: f64, y: &[f64]) {
        buf[0] = t;
        buf[1..=4 * self.n].copy_from_slice(&y[..4 * self.n]);
    }

    fn accel_slot(&self, i: usize) -> usize {
        1 + 4 * self.n + i
    }

    fn dev_accel_slot(&self, i: usize) -> usize {
        1 + 5 * self.n + i
    }
}

/// Explicit first-order form of the combined dynamics, ready for repeated
/// right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct OdeSystem {
    layout: StateLayout,
    params: Vec<(Symbol, f64)>,
    slots: Slots,
    n: usize,
    /// Mass-matrix entries, row major.
    mass: Vec<CompiledExpr>,
    /// Placeholder-free part of the Euler-Lagrange residuals; the forcing
    /// is its negation.
    el_rest: Vec<CompiledExpr>,
    /// Deviation-acceleration-free part of the variational residuals; may
    /// reference base accelerations, which are bound before evaluation.
    var_rest: Vec<CompiledExpr>,
}

/// Build the explicit combined system. For small systems a symbolically
/// singular mass matrix is rejected here; larger systems fail at run time
/// through the condition estimate.
pub fn assemble_ode(sys: &SystemDef) -> Result<OdeSystem, DerivationError> {
    let n = sys.n();
    if n <= MAX_SYMBOLIC_N {
        // Reuse the closed-form solve to reject degenerate Lagrangians.
        solved_accelerations(sys)?;
    }
    let slots = Slots::new(sys);
    let el = euler_lagrange(sys);
    let var = variational_raw(sys);

    let zero_a: std::collections::BTreeMap<Symbol, Expression> = (0..n)
        .map(|i| (sys.acceleration(i), Expression::zero()))
        .collect();
    let zero_b: std::collections::BTreeMap<Symbol, Expression> = (0..n)
        .map(|i| (sys.deviation_acceleration(i), Expression::zero()))
        .collect();

    let compile_all = |exprs: Vec<Expression>| -> Vec<CompiledExpr> {
        exprs
            .iter()
            .map(|e| slots.compile(e).expect("system symbols all have slots"))
            .collect()
    };

    let mass = compile_all(mass_matrix(sys).into_iter().flatten().collect());
    let el_rest = compile_all(
        el.residuals
            .iter()
            .map(|r| r.substitute(&zero_a))
            .collect(),
    );
    let var_rest = compile_all(
        var.residuals
            .iter()
            .map(|r| r.substitute(&zero_b))
            .collect(),
    );

    Ok(OdeSystem {
        layout: StateLayout {
            coords: sys.coords().to_vec(),
        },
        params: sys
            .params()
            .iter()
            .map(|(k, v)| (Symbol::parameter(k), *v))
            .collect(),
        slots,
        n,
        mass,
        el_rest,
        var_rest,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhsError {
    #[error("numerically singular mass matrix (condition estimate {cond:.3e})")]
    SingularMass { cond: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl OdeSystem {
    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        4 * self.n
    }

    /// A reentrant evaluator with its own scratch storage. Independent
    /// evaluators of one system may run concurrently.
    pub fn evaluator(&self) -> RhsEvaluator<'_> {
        RhsEvaluator {
            ode: self,
            buf: self.slots.template.clone(),
            stack: Vec::with_capacity(16),
            lu: vec![0.0; self.n * self.n],
            piv: vec![0; self.n],
            rhs: vec![0.0; self.n],
        }
    }

    /// One-off right-hand-side evaluation.
    pub fn eval_rhs(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), RhsError> {
        self.evaluator().eval(t, y, out)
    }
}

/// Per-thread evaluation scratch for an [`OdeSystem`].
pub struct RhsEvaluator<'a> {
    ode: &'a OdeSystem,
    buf: Vec<f64>,
    stack: Vec<f64>,
    lu: Vec<f64>,
    piv: Vec<usize>,
    rhs: Vec<f64>,
}

impl RhsEvaluator<'_> {
    pub fn eval(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), RhsError> {
        let n = self.ode.n;
        let slots = &self.ode.slots;
        slots.load_state(&mut self.buf, t, y);

        // qdot = v, epsdot = w.
        for i in 0..n {
            out[i] = y[n + i];
            out[2 * n + i] = y[3 * n + i];
        }

        // Factor the mass matrix once, reuse for both solves.
        for (k, c) in self.ode.mass.iter().enumerate() {
            self.lu[k] = c.eval_with(&self.buf, &mut self.stack)?;
        }
        let cond = lu_factor(&mut self.lu, n, &mut self.piv)?;
        if !(cond <= SINGULAR_CONDITION_LIMIT) {
            return Err(RhsError::SingularMass { cond });
        }

        // M vdot = -r.
        for (i, c) in self.ode.el_rest.iter().enumerate() {
            self.rhs[i] = -c.eval_with(&self.buf, &mut self.stack)?;
        }
        lu_solve(&self.lu, n, &self.piv, &mut self.rhs);
        for i in 0..n {
            out[n + i] = self.rhs[i];
            self.buf[slots.accel_slot(i)] = self.rhs[i];
        }

        // M wdot = -s, with the base accelerations now bound.
        for (i, c) in self.ode.var_rest.iter().enumerate() {
            self.rhs[i] = -c.eval_with(&self.buf, &mut self.stack)?;
        }
        lu_solve(&self.lu, n, &self.piv, &mut self.rhs);
        out[3 * n..4 * n].copy_from_slice(&self.rhs[..n]);
        Ok(())
    }
}

/// In-place LU factorization with partial pivoting. Returns the ratio of
/// extreme pivot magnitudes as a cheap condition estimate.
fn lu_factor(a: &mut [f64], n: usize, piv: &mut [usize]) -> Result<f64, RhsError> {
    let mut max_piv: f64 = 0.0;
    let mut min_piv = f64::INFINITY;
    for col in 0..n {
        let mut best = col;
        let mut best_abs = a[col * n + col].abs();
        for row in col + 1..n {
            let cand = a[row * n + col].abs();
            if cand > best_abs {
                best = row;
                best_abs = cand;
            }
        }
        if best_abs == 0.0 || !best_abs.is_finite() {
            return Err(RhsError::SingularMass { cond: f64::INFINITY });
        }
        if best != col {
            for k in 0..n {
                a.swap(col * n + k, best * n + k);
            }
        }
        piv[col] = best;
        max_piv = max_piv.max(best_abs);
        min_piv = min_piv.min(best_abs);
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            a[row * n + col] = factor;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
        }
    }
    Ok(max_piv / min_piv)
}

fn lu_solve(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    for col in 0..n {
        if piv[col] != col {
            b.swap(col, piv[col]);
        }
        for row in col + 1..n {
            b[row] -= a[row * n + col] * b[col];
        }
    }
    for col in (0..n).rev() {
        b[col] /= a[col * n + col];
        for row in 0..col {
            b[row] -= a[row * n + col] * b[col];
        }
    }
}

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("invalid integration request: {0}")]
    Invalid(String),
    #[error("singular mass matrix at step {step} (t = {t}): {source}")]
    SingularMass {
        step: usize,
        t: f64,
        source: RhsError,
    },
    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("evaluation error at step {step} (t = {t}): {source}")]
    Eval {
        step: usize,
        t: f64,
        source: EvalError,
    },
}

/// Conservation summary for one monitored charge.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DriftReport {
    pub charge: String,
    pub initial: f64,
    pub max_drift: f64,
    pub relative_drift: f64,
}

/// Uniformly sampled states with optional per-charge series. Rows may be
/// strided when a run exceeds the storage cap; drift maxima are always
/// computed at full resolution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    layout: StateLayout,
    params: Vec<(Symbol, f64)>,
    times: Vec<f64>,
    states: Vec<f64>,
    charge_names: Vec<String>,
    charge_rows: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn time(&self, row: usize) -> f64 {
        self.times[row]
    }

    pub fn state(&self, row: usize) -> &[f64] {
        let d = self.layout.dim();
        &self.states[row * d..(row + 1) * d]
    }

    pub fn charge_names(&self) -> &[String] {
        &self.charge_names
    }

    /// Charge values aligned with the stored rows.
    pub fn charge_row(&self, row: usize) -> &[f64] {
        let m = self.charge_names.len();
        &self.charge_rows[row]
            [..m]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.rows() - 1)
    }
}

fn step_count(t0: f64, t_end: f64, h: f64) -> Result<usize, IntegrationError> {
    if !(h > 0.0) {
        return Err(IntegrationError::Invalid("step size must be positive".into()));
    }
    if !(t_end > t0) {
        return Err(IntegrationError::Invalid(
            "end time must exceed the initial time".into(),
        ));
    }
    let steps = (t_end - t0) / h;
    let rounded = steps.round();
    if (steps - rounded).abs() > 1e-9 * steps.abs().max(1.0) {
        return Err(IntegrationError::Invalid(format!(
            "step {h} does not divide the interval [{t0}, {t_end}] (within one part in 1e9)"
        )));
    }
    Ok(rounded as usize)
}

/// Integrate the combined system with classic fixed-step RK4.
pub fn integrate(
    ode: &OdeSystem,
    init: &InitialState,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, IntegrationError> {
    integrate_monitored(ode, init, t_end, h, &[]).map(|(traj, _)| traj)
}

/// Integrate while evaluating charges at every step (regardless of row
/// striding) and accumulating their drift.
pub fn integrate_monitored(
    ode: &OdeSystem,
    init: &InitialState,
    t_end: f64,
    h: f64,
    charges: &[Charge],
) -> Result<(Trajectory, Vec<DriftReport>), IntegrationError> {
    let n = ode.n;
    if init.coords.len() != n {
        return Err(IntegrationError::Invalid(format!(
            "initial state covers {} coordinates, system has {n}",
            init.coords.len()
        )));
    }
    let nsteps = step_count(init.t0, t_end, h)?;
    let stride = (nsteps + 1).div_ceil(TRAJECTORY_ROW_CAP).max(1);

    let compiled_charges: Vec<CompiledExpr> = charges
        .iter()
        .map(|c| {
            if c.expr.contains_placeholder() {
                return Err(IntegrationError::Invalid(format!(
                    "charge `{}` contains acceleration placeholders",
                    c.name
                )));
            }
            ode.slots.compile(&c.expr).map_err(|e| IntegrationError::Eval {
                step: 0,
                t: init.t0,
                source: e,
            })
        })
        .collect::<Result<_, _>>()?;

    let dim = 4 * n;
    let mut y = init.state_vector();
    let mut eval = ode.evaluator();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut ytmp = vec![0.0; dim];
    let mut obs_buf = ode.slots.template.clone();
    let mut obs_stack: Vec<f64> = Vec::with_capacity(16);

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut charge_rows = Vec::new();
    let mut drift: Vec<(f64, f64)> = Vec::new(); // (initial, max |delta|)

    for step in 0..=nsteps {
        let t = init.t0 + step as f64 * h;
        if y.iter().any(|x| !x.is_finite()) {
            return Err(IntegrationError::NonFinite { step, t });
        }

        let mut charge_values = Vec::with_capacity(compiled_charges.len());
        if !compiled_charges.is_empty() {
            ode.slots.load_state(&mut obs_buf, t, &y);
            for (ci, c) in compiled_charges.iter().enumerate() {
                let value = c
                    .eval_with(&obs_buf, &mut obs_stack)
                    .map_err(|e| IntegrationError::Eval { step, t, source: e })?;
                if step == 0 {
                    drift.push((value, 0.0));
                } else {
                    let d = (value - drift[ci].0).abs();
                    if d > drift[ci].1 {
                        drift[ci].1 = d;
                    }
                }
                charge_values.push(value);
            }
        }

        if step % stride == 0 || step == nsteps {
            times.push(t);
            states.extend_from_slice(&y);
            charge_rows.push(charge_values);
        }

        if step == nsteps {
            break;
        }

        let rhs_err = |e: RhsError, step: usize, t: f64| match e {
            RhsError::SingularMass { .. } => IntegrationError::SingularMass {
                step,
                t,
                source: e,
            },
            RhsError::Eval(source) => IntegrationError::Eval { step, t, source },
        };

        eval.eval(t, &y, &mut k1).map_err(|e| rhs_err(e, step, t))?;
        for i in 0..dim {
            ytmp[i] = y[i] + 0.5 * h * k1[i];
        }
        eval.eval(t + 0.5 * h, &ytmp, &mut k2)
            .map_err(|e| rhs_err(e, step, t))?;
        for i in 0..dim {
            ytmp[i] = y[i] + 0.5 * h * k2[i];
        }
        eval.eval(t + 0.5 * h, &ytmp, &mut k3)
            .map_err(|e| rhs_err(e, step, t))?;
        for i in 0..dim {
            ytmp[i] = y[i] + h * k3[i];
        }
        eval.eval(t + h, &ytmp, &mut k4)
            .map_err(|e| rhs_err(e, step, t))?;
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    let reports = charges
        .iter()
        .zip(&drift)
        .map(|(c, (initial, max_drift))| DriftReport {
            charge: c.name.clone(),
            initial: *initial,
            max_drift: *max_drift,
            relative_drift: *max_drift / initial.abs().max(1.0),
        })
        .collect();

    let traj = Trajectory {
        layout: ode.layout.clone(),
        params: ode.params.clone(),
        times,
        states,
        charge_names: charges.iter().map(|c| c.name.clone()).collect(),
        charge_rows,
    };
    Ok((traj, reports))
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("charge `{charge}` contains acceleration placeholders")]
    Placeholder { charge: String },
    #[error("evaluating `{charge}` at stored step {row}: {source}")]
    Eval {
        charge: String,
        row: usize,
        source: EvalError,
    },
}

/// Evaluate charges at every stored step of a trajectory and report their
/// drift.
pub fn monitor(traj: &Trajectory, charges: &[Charge]) -> Result<Vec<DriftReport>, MonitorError> {
    let params: HashMap<Symbol, f64> = traj.params.iter().cloned().collect();
    let n = traj.layout.n();
    let mut out = Vec::with_capacity(charges.len());
    for charge in charges {
        if charge.expr.contains_placeholder() {
            return Err(MonitorError::Placeholder {
                charge: charge.name.clone(),
            });
        }
        let mut initial = 0.0;
        let mut max_drift: f64 = 0.0;
        for row in 0..traj.rows() {
            let t = traj.time(row);
            let y = traj.state(row);
            let bind = |s: &Symbol| -> Option<f64> {
                match s.kind() {
                    SymbolKind::Time => Some(t),
                    SymbolKind::Coordinate => Some(y[s.index()? as usize]),
                    SymbolKind::Velocity => Some(y[n + s.index()? as usize]),
                    SymbolKind::Deviation => Some(y[2 * n + s.index()? as usize]),
                    SymbolKind::DeviationVelocity => Some(y[3 * n + s.index()? as usize]),
                    SymbolKind::Parameter => params.get(s).copied(),
                    _ => None,
                }
            };
            let value = charge.expr.evaluate(&bind).map_err(|e| MonitorError::Eval {
                charge: charge.name.clone(),
                row,
                source: e,
            })?;
            if row == 0 {
                initial = value;
            } else {
                max_drift = max_drift.max((value - initial).abs());
            }
        }
        out.push(DriftReport {
            charge: charge.name.clone(),
            initial,
            max_drift,
            relative_drift: max_drift / initial.abs().max(1.0),
        });
    }
    Ok(out)
}

/// Write a trajectory as CSV with 17-significant-digit floats:
/// `t,q_<name>...,v_<name>...,eps_<name>...,w_<name>...,<charge>...`.
pub fn write_csv<W: io::Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    let coords = traj.layout.coords();
    let mut header = String::from("t");
    for prefix in ["q", "v", "eps", "w"] {
        for c in coords {
            header.push_str(&format!(",{prefix}_{c}"));
        }
    }
    for c in &traj.charge_names {
        header.push_str(&format!(",{c}"));
    }
    writeln!(out, "{header}")?;
    for row in 0..traj.rows() {
        let mut line = format!("{:.16e}", traj.time(row));
        for x in traj.state(row) {
            line.push_str(&format!(",{x:.16e}"));
        }
        for x in traj.charge_row(row) {
            line.push_str(&format!(",{x:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Default perturbation sizes for the tangent oracle's ratio test.
pub const DEFAULT_ORACLE_DELTAS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

/// Finite-difference validation of the tangent dynamics: compare the
/// integrated deviations against `(perturbed - base) / delta` from pairs
/// of base-only trajectories.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OracleReport {
    /// `(delta, E(delta))` per perturbation size.
    pub samples: Vec<(f64, f64)>,
    /// `E(delta_{i+1}) / E(delta_i)` for consecutive samples.
    pub ratios: Vec<f64>,
}

pub fn tangent_oracle(
    sys: &SystemDef,
    init: &InitialState,
    deltas: &[f64],
    t_end: f64,
    h: f64,
) -> Result<OracleReport, IntegrationError> {
    for d in deltas {
        if !(*d > 0.0) {
            return Err(IntegrationError::Invalid(
                "oracle perturbations must be positive".into(),
            ));
        }
    }
    let ode = assemble_ode(sys).map_err(|e| IntegrationError::Invalid(e.to_string()))?;
    let n = sys.n();
    let combined = integrate(&ode, init, t_end, h)?;

    let base_init = InitialState {
        t0: init.t0,
        coords: init
            .coords
            .iter()
            .map(|c| crate::model::CoordInit {
                q: c.q,
                v: c.v,
                eps: 0.0,
                w: 0.0,
            })
            .collect(),
    };
    let base = integrate(&ode, &base_init, t_end, h)?;

    let mut samples = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let pert_init = InitialState {
            t0: init.t0,
            coords: init
                .coords
                .iter()
                .map(|c| crate::model::CoordInit {
                    q: c.q + delta * c.eps,
                    v: c.v + delta * c.w,
                    eps: 0.0,
                    w: 0.0,
                })
                .collect(),
        };
        let pert = integrate(&ode, &pert_init, t_end, h)?;
        let mut err: f64 = 0.0;
        for row in 0..combined.rows() {
            let yc = combined.state(row);
            let yb = base.state(row);
            let yp = pert.state(row);
            for i in 0..n {
                let fd = (yp[i] - yb[i]) / delta;
                err = err.max((fd - yc[2 * n + i]).abs());
            }
        }
        samples.push((delta, err));
    }
    let ratios = samples
        .windows(2)
        .map(|w| w[1].1 / w[0].1)
        .collect();
    Ok(OracleReport { samples, ratios })
}

#[derive(Debug, Error)]
pub enum TangentCheckError {
    #[error("the tangent-solution property requires a time-independent lagrangian")]
    ExplicitTime,
    #[error(transparent)]
    Derivation(#[from] DerivationError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TangentSolutionReport {
    pub max_residual: f64,
    pub rows: usize,
}

/// Check that the time derivative of a solution solves the variational
/// equations: integrate the base system, set `eps = v` and `w = vdot`
/// pointwise, and evaluate the variational residuals along the grid.
/// The deviation accelerations are taken from the exact derivative of the
/// solved base accelerations.
pub fn tangent_solution_check(
    sys: &SystemDef,
    init: &InitialState,
    t_end: f64,
    h: f64,
) -> Result<TangentSolutionReport, TangentCheckError> {
    if sys.lagrangian().contains_symbol(&Symbol::time()) {
        return Err(TangentCheckError::ExplicitTime);
    }
    let accel = solved_accelerations(sys)?;
    let accel_map: std::collections::BTreeMap<Symbol, Expression> = (0..sys.n())
        .map(|i| (sys.acceleration(i), accel[i].clone()))
        .collect();
    // d/dt of the solved accelerations, back on shell.
    let accel_rate: Vec<Expression> = accel
        .iter()
        .map(|a| {
            a.total_time_derivative()
                .expect("solved accelerations are placeholder-free")
                .substitute(&accel_map)
        })
        .collect();
    let residuals = crate::prolongation::variational_equations_direct(sys)?.residuals;

    let ode = assemble_ode(sys)?;
    let traj = integrate(&ode, init, t_end, h)?;

    let slots = Slots::new(sys);
    let c_accel: Vec<CompiledExpr> = accel.iter().map(|e| slots.compile(e).unwrap()).collect();
    let c_rate: Vec<CompiledExpr> = accel_rate
        .iter()
        .map(|e| slots.compile(e).unwrap())
        .collect();
    let c_res: Vec<CompiledExpr> = residuals
        .iter()
        .map(|e| slots.compile(e).unwrap())
        .collect();

    let n = sys.n();
    let mut buf = slots.template.clone();
    let mut stack = Vec::with_capacity(16);
    let mut max_residual: f64 = 0.0;
    let eval_err = |row: usize, t: f64, e: EvalError| {
        TangentCheckError::Integration(IntegrationError::Eval {
            step: row,
            t,
            source: e,
        })
    };
    for row in 0..traj.rows() {
        let t = traj.time(row);
        let y = traj.state(row);
        slots.load_state(&mut buf, t, y);
        // eps := v.
        for i in 0..n {
            buf[1 + 2 * n + i] = y[n + i];
        }
        // w := vdot, dd(eps) := d(vdot)/dt, both from the base state.
        for i in 0..n {
            let a = c_accel[i]
                .eval_with(&buf, &mut stack)
                .map_err(|e| eval_err(row, t, e))?;
            buf[1 + 3 * n + i] = a;
        }
        for i in 0..n {
            let r = c_rate[i]
                .eval_with(&buf, &mut stack)
                .map_err(|e| eval_err(row, t, e))?;
            buf[slots.dev_accel_slot(i)] = r;
        }
        for c in &c_res {
            let value = c
                .eval_with(&buf, &mut stack)
                .map_err(|e| eval_err(row, t, e))?;
            max_residual = max_residual.max(value.abs());
        }
    }
    Ok(TangentSolutionReport {
        max_residual,
        rows: traj.rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::ChargeKind;

    fn system(name: &str, coords: &[&str], params: &[(&str, f64)], l: Expression) -> SystemDef {
        SystemDef::new(
            name,
            coords.iter().map(|c| c.to_string()).collect(),
            params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            l,
        )
        .unwrap()
    }

    fn unit_oscillator() -> SystemDef {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let half = Expression::rational(1, 2);
        system(
            "oscillator",
            &["q"],
            &[],
            half.clone() * v.powi(2) - half * q.powi(2),
        )
    }

    fn pendulum() -> SystemDef {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        system(
            "pendulum",
            &["q"],
            &[],
            Expression::rational(1, 2) * v.powi(2) + q.cos(),
        )
    }

    fn init(vals: &[[f64; 4]]) -> InitialState {
        InitialState {
            t0: 0.0,
            coords: vals
                .iter()
                .map(|[q, v, eps, w]| crate::model::CoordInit {
                    q: *q,
                    v: *v,
                    eps: *eps,
                    w: *w,
                })
                .collect(),
        }
    }

    #[test]
    fn oscillator_rhs_at_unit_state() {
        let sys = unit_oscillator();
        let ode = assemble_ode(&sys).unwrap();
        let mut out = vec![0.0; 4];
        ode.eval_rhs(0.0, &[1.0, 0.0, 0.0, 1.0], &mut out).unwrap();
        assert_eq!(out, vec![0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn free_particle_rhs() {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let sys = system("free", &["q"], &[], Expression::rational(1, 2) * v.powi(2));
        let ode = assemble_ode(&sys).unwrap();
        let mut out = vec![0.0; 4];
        ode.eval_rhs(0.0, &[0.0, 2.0, 0.0, 3.0], &mut out).unwrap();
        assert_eq!(out, vec![2.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn pendulum_rhs_linearization_at_stable_point() {
        let sys = pendulum();
        let ode = assemble_ode(&sys).unwrap();
        let mut out = vec![0.0; 4];
        ode.eval_rhs(0.0, &[0.0, 0.0, 1.0, 0.0], &mut out).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn oscillator_full_period_returns_to_start() {
        let sys = unit_oscillator();
        let ode = assemble_ode(&sys).unwrap();
        let t_end = 2.0 * std::f64::consts::PI;
        let h = t_end / 6283.0;
        let traj = integrate(&ode, &init(&[[1.0, 0.0, 0.0, 1.0]]), t_end, h).unwrap();
        let y = traj.final_state();
        for (got, want) in y.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-9, "state {y:?}");
        }
    }

    #[test]
    fn free_particle_is_integrated_exactly() {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let sys = system("free", &["q"], &[], Expression::rational(1, 2) * v.powi(2));
        let ode = assemble_ode(&sys).unwrap();
        let traj = integrate(&ode, &init(&[[0.0, 1.0, 0.0, 0.0]]), 1.0, 1e-3).unwrap();
        let y = traj.final_state();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert_eq!(y[1], 1.0);
        assert_eq!(y[2], 0.0);
        assert_eq!(y[3], 0.0);
    }

    #[test]
    fn rk4_error_drops_sixteenfold_when_halving_h() {
        let sys = unit_oscillator();
        let ode = assemble_ode(&sys).unwrap();
        let t_end = 2.0 * std::f64::consts::PI;
        let exact = [1.0, 0.0, 0.0, 1.0];
        let err = |h: f64| {
            let traj = integrate(&ode, &init(&[[1.0, 0.0, 0.0, 1.0]]), t_end, h).unwrap();
            traj.final_state()
                .iter()
                .zip(exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = err(t_end / 250.0);
        let fine = err(t_end / 500.0);
        let ratio = coarse / fine;
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn step_validation() {
        let sys = unit_oscillator();
        let ode = assemble_ode(&sys).unwrap();
        let st = init(&[[1.0, 0.0, 0.0, 0.0]]);
        assert!(matches!(
            integrate(&ode, &st, 1.0, 0.3),
            Err(IntegrationError::Invalid(_))
        ));
        assert!(matches!(
            integrate(&ode, &st, -1.0, 1e-3),
            Err(IntegrationError::Invalid(_))
        ));
        assert!(matches!(
            integrate(&ode, &st, 1.0, -1e-3),
            Err(IntegrationError::Invalid(_))
        ));
    }

    #[test]
    fn blowup_is_reported_with_step_index() {
        // L = v^2/2 + q^3/3 drives q to infinity in finite time.
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let sys = system(
            "blowup",
            &["q"],
            &[],
            Expression::rational(1, 2) * v.powi(2) + Expression::rational(1, 3) * q.powi(3),
        );
        let ode = assemble_ode(&sys).unwrap();
        match integrate(&ode, &init(&[[2.0, 0.0, 0.0, 0.0]]), 10.0, 1e-3) {
            Err(IntegrationError::NonFinite { step, .. }) => assert!(step > 0),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn pendulum_energy_drift_is_tiny() {
        let sys = pendulum();
        let ode = assemble_ode(&sys).unwrap();
        let v = Expression::symbol(sys.velocity(0));
        let q = Expression::symbol(sys.coord(0));
        let energy = Charge {
            name: "energy".into(),
            kind: ChargeKind::Classical,
            expr: Expression::rational(1, 2) * v.powi(2) - q.cos(),
            verified: true,
        };
        let (_, reports) = integrate_monitored(
            &ode,
            &init(&[[0.3, 0.0, 1.0, 0.0]]),
            100.0,
            1e-3,
            &[energy],
        )
        .unwrap();
        assert!(
            reports[0].relative_drift < 1e-8,
            "drift {:.3e}",
            reports[0].relative_drift
        );
    }

    #[test]
    fn flat_pair_ignorable_momentum_is_exactly_conserved() {
        // Ignorable-direction dynamics is exactly linear, so the combined
        // momentum v1 + w1 survives RK4 to round-off.
        let v1 = Expression::symbol(Symbol::velocity("q1", 0));
        let v2 = Expression::symbol(Symbol::velocity("q2", 1));
        let q2 = Expression::symbol(Symbol::coordinate("q2", 1));
        let half = Expression::rational(1, 2);
        let l = half.clone() * (v1.clone().powi(2) + v2.powi(2))
            - half * q2.powi(2)
            - Expression::rational(1, 4) * q2.powi(4);
        let sys = system("flat_pair", &["q1", "q2"], &[], l);
        let ode = assemble_ode(&sys).unwrap();
        let w1 = Expression::symbol(sys.deviation_velocity(0));
        let pi1 = Charge {
            name: "pi_1".into(),
            kind: ChargeKind::Extended,
            expr: v1 + w1,
            verified: true,
        };
        let st = init(&[[0.2, 0.3, 1.0, 0.5], [0.5, 0.0, 0.0, 1.0]]);
        let (_, reports) = integrate_monitored(&ode, &st, 100.0, 1e-3, &[pi1]).unwrap();
        assert!(
            reports[0].relative_drift < 1e-10,
            "drift {:.3e}",
            reports[0].relative_drift
        );
    }

    #[test]
    fn non_conserved_expression_is_flagged() {
        let sys = unit_oscillator();
        let ode = assemble_ode(&sys).unwrap();
        let q = Expression::symbol(sys.coord(0));
        let eps = Expression::symbol(sys.deviation(0));
        let bogus = Charge::unverified("bogus", ChargeKind::Extended, q * eps);
        let (traj, reports) = integrate_monitored(
            &ode,
            &init(&[[1.0, 0.0, 0.0, 1.0]]),
            100.0,
            1e-3,
            &[bogus.clone()],
        )
        .unwrap();
        assert!(reports[0].relative_drift > 1e-2);

        // The standalone monitor pass sees the same drift on stored rows.
        let again = monitor(&traj, &[bogus]).unwrap();
        assert!((again[0].relative_drift - reports[0].relative_drift).abs() < 1e-12);
    }

    #[test]
    fn oracle_error_is_first_order_on_the_pendulum() {
        let sys = pendulum();
        let st = init(&[[1.0, 0.0, 1.0, 0.0]]);
        let report = tangent_oracle(&sys, &st, &DEFAULT_ORACLE_DELTAS, 10.0, 1e-3).unwrap();
        assert_eq!(report.samples.len(), 3);
        for r in &report.ratios {
            assert!((0.4..=0.6).contains(r), "ratios {:?}", report.ratios);
        }
    }

    #[test]
    fn oracle_is_exact_on_linear_dynamics() {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let sys = system("free", &["q"], &[], Expression::rational(1, 2) * v.powi(2));
        let st = init(&[[0.0, 1.0, 0.5, 0.25]]);
        let report = tangent_oracle(&sys, &st, &[1e-4], 10.0, 1e-2).unwrap();
        // Round-off in the trajectory is amplified by 1/delta; anything at
        // the 1e-8 level is zero for this comparison.
        assert!(report.samples[0].1 < 1e-8, "E {:?}", report.samples);
    }

    #[test]
    fn tangent_solution_residual_is_small() {
        let sys = unit_oscillator();
        let st = init(&[[1.0, 0.0, 0.0, 0.0]]);
        let report = tangent_solution_check(&sys, &st, 10.0, 1e-3).unwrap();
        assert!(report.max_residual < 1e-8, "residual {:.3e}", report.max_residual);

        let sys = pendulum();
        let st = init(&[[1.0, 0.2, 0.0, 0.0]]);
        let report = tangent_solution_check(&sys, &st, 10.0, 1e-3).unwrap();
        assert!(report.max_residual < 1e-7, "residual {:.3e}", report.max_residual);
    }

    #[test]
    fn tangent_solution_check_rejects_explicit_time() {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let t = Expression::symbol(Symbol::time());
        let sys = system(
            "driven",
            &["q"],
            &[],
            Expression::rational(1, 2) * v.powi(2) - t * q,
        );
        let st = init(&[[0.0, 0.0, 0.0, 0.0]]);
        assert!(matches!(
            tangent_solution_check(&sys, &st, 1.0, 1e-3),
            Err(TangentCheckError::ExplicitTime)
        ));
    }

    #[test]
    fn csv_export_has_layout_header_and_17_digit_floats() {
        let sys = unit_oscillator();
        let ode = assemble_ode(&sys).unwrap();
        let q = Expression::symbol(sys.coord(0));
        let charge = Charge::unverified("probe", ChargeKind::Classical, q);
        let (traj, _) =
            integrate_monitored(&ode, &init(&[[1.0, 0.0, 0.0, 1.0]]), 0.01, 1e-3, &[charge])
                .unwrap();
        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,q_q,v_q,eps_q,w_q,probe");
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 6);
        assert!(row.split(',').all(|f| f.contains('e')));
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn singular_mass_at_runtime_is_reported() {
        // M = q becomes singular when the trajectory crosses q = 0.
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let sys = system(
            "runtime_singular",
            &["q"],
            &[],
            Expression::rational(1, 2) * q.clone() * v.powi(2) - q.powi(2),
        );
        let ode = assemble_ode(&sys).unwrap();
        let result = integrate(&ode, &init(&[[0.0, 1.0, 0.0, 0.0]]), 1.0, 1e-3);
        assert!(
            matches!(result, Err(IntegrationError::SingularMass { .. })),
            "{result:?}"
        );
    }
}
