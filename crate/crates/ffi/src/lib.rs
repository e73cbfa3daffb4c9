//! C ABI over `msgfem-core`.
//!
//! Every fallible call returns a [`MsgfemStatus`]; on failure the message is
//! available from [`msgfem_last_error`] on the same thread. Handles are
//! opaque and released with their `_free` function. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use msgfem::coefficient::{CellCoefficients, CoefficientField, SourceField};
use msgfem::fem::{SolverOptions, StructuredMesh};
use msgfem::harness::{worker_pool, Evaluation, Pipeline};
use msgfem::validation::{fine_reference, FineSolution};
use msgfem::MsgfemError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgfemStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    Io = 4,
    Buffer = 5,
    Panic = 6,
}

/// Opaque coefficient raster.
pub struct MsgfemCoefficient {
    field: CoefficientField,
}

/// Opaque solver: fine reference, local spaces and coarse space for one
/// parameter set, with the benchmark right-hand side.
pub struct MsgfemSolver {
    mesh: StructuredMesh,
    fine: FineSolution,
    pipeline: Pipeline,
    nloc_max: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsgfemParams {
    /// Fine cells per axis.
    pub n: usize,
    /// Subdomains per axis.
    pub per_axis: usize,
    /// Oversampling layers.
    pub ell: usize,
    /// Largest number of local basis functions later evaluations may use.
    pub nloc_max: usize,
    pub eps: f64,
    /// Worker threads, 0 for all cores.
    pub workers: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MsgfemReport {
    pub err_energy: f64,
    pub err_rel: f64,
    pub bound_thm21: f64,
    pub reference_norm: f64,
    pub kappa: usize,
    pub kappa_star: usize,
    pub coarse_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &MsgfemError) -> MsgfemStatus {
    match e {
        MsgfemError::Io(_) => MsgfemStatus::Io,
        e if e.is_config() => MsgfemStatus::Config,
        _ => MsgfemStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MsgfemStatus, String)>) -> MsgfemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsgfemStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MsgfemStatus::Panic
        }
    }
}

fn lift<T>(r: msgfem::Result<T>) -> Result<T, (MsgfemStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MsgfemStatus, String) {
    (MsgfemStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, (MsgfemStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| (MsgfemStatus::Config, "path is not valid UTF-8".to_string()))?;
    Ok(PathBuf::from(s))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msgfem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn msgfem_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Desk-scale defaults: n = 256, N = 8, ℓ = 8, n_loc ≤ 30, ε = 0.1.
#[no_mangle]
pub extern "C" fn msgfem_params_default() -> MsgfemParams {
    MsgfemParams { n: 256, per_axis: 8, ell: 8, nloc_max: 30, eps: 0.1, workers: 0 }
}

/// Seeded log-uniform raster with values in `[1, contrast]`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgfem_coefficient_generate(
    seed: u64,
    s: f64,
    contrast: f64,
    out: *mut *mut MsgfemCoefficient,
) -> MsgfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let field = lift(CoefficientField::generate_multiscale(seed, s, contrast))?;
        *out = Box::into_raw(Box::new(MsgfemCoefficient { field }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgfem_coefficient_load(
    path: *const c_char,
    out: *mut *mut MsgfemCoefficient,
) -> MsgfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let field = lift(CoefficientField::load(&path_arg(path)?))?;
        *out = Box::into_raw(Box::new(MsgfemCoefficient { field }));
        Ok(())
    })
}

/// # Safety
/// `coef` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn msgfem_coefficient_save(
    coef: *const MsgfemCoefficient,
    path: *const c_char,
) -> MsgfemStatus {
    guard(|| {
        let coef = coef.as_ref().ok_or_else(|| null("coefficient"))?;
        lift(coef.field.save(&path_arg(path)?))
    })
}

/// Value of the micro-cell containing `(x, y)`.
///
/// # Safety
/// `coef` must come from this library and `value` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgfem_coefficient_eval(
    coef: *const MsgfemCoefficient,
    x: f64,
    y: f64,
    value: *mut f64,
) -> MsgfemStatus {
    guard(|| {
        let coef = coef.as_ref().ok_or_else(|| null("coefficient"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        *value = lift(coef.field.eval(x, y))?;
        Ok(())
    })
}

/// # Safety
/// `coef` must come from this library (or be NULL) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn msgfem_coefficient_free(coef: *mut MsgfemCoefficient) {
    if !coef.is_null() {
        drop(Box::from_raw(coef));
    }
}

/// Fine reference solve and all local solves for `params`.
///
/// # Safety
/// `coef` must come from this library; `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msgfem_solver_new(
    coef: *const MsgfemCoefficient,
    params: *const MsgfemParams,
    out: *mut *mut MsgfemSolver,
) -> MsgfemStatus {
    guard(|| {
        let coef = coef.as_ref().ok_or_else(|| null("coefficient"))?;
        let p = *params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pool = lift(worker_pool(p.workers))?;
        let solver = pool.install(|| -> msgfem::Result<MsgfemSolver> {
            let mesh = StructuredMesh::new(p.n)?;
            let coeff: CellCoefficients = coef.field.sample(&mesh);
            let f = SourceField::benchmark();
            let fine = fine_reference(&mesh, &coeff, p.eps, &f, &SolverOptions::default())?;
            let pipeline = Pipeline::build(&mesh, &coeff, &f, p.eps, p.per_axis, p.ell, p.nloc_max)?;
            Ok(MsgfemSolver { mesh, fine, pipeline, nloc_max: p.nloc_max })
        });
        *out = Box::into_raw(Box::new(lift(solver)?));
        Ok(())
    })
}

/// Number of mesh nodes, the length of solution buffers.
///
/// # Safety
/// `solver` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn msgfem_solver_node_count(solver: *const MsgfemSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.mesh.node_count())
}

unsafe fn evaluate(solver: *const MsgfemSolver, nloc: usize) -> Result<Evaluation, (MsgfemStatus, String)> {
    let s = solver.as_ref().ok_or_else(|| null("solver"))?;
    if nloc > s.nloc_max {
        return Err((MsgfemStatus::Config, format!("nloc {nloc} exceeds nloc_max {}", s.nloc_max)));
    }
    lift(s.pipeline.evaluate(&s.fine, nloc))
}

/// Coarse solve with `nloc` local basis functions per subdomain.
///
/// # Safety
/// `solver` must come from this library and `report` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msgfem_solver_evaluate(
    solver: *const MsgfemSolver,
    nloc: usize,
    report: *mut MsgfemReport,
) -> MsgfemStatus {
    guard(|| {
        if report.is_null() {
            return Err(null("report"));
        }
        let ev = evaluate(solver, nloc)?;
        let r = &ev.report;
        *report = MsgfemReport {
            err_energy: r.err_energy,
            err_rel: r.err_rel,
            bound_thm21: r.bound_thm21,
            reference_norm: r.reference_norm,
            kappa: r.kappa,
            kappa_star: r.kappa_star,
            coarse_dim: r.coarse_dim,
        };
        Ok(())
    })
}

unsafe fn write_nodal(buf: *mut f64, len: usize, values: &[f64]) -> Result<(), (MsgfemStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len != values.len() {
        return Err((MsgfemStatus::Buffer, format!("buffer holds {len} values, need {}", values.len())));
    }
    std::slice::from_raw_parts_mut(buf, len).copy_from_slice(values);
    Ok(())
}

/// Nodal values of the coarse solution, node `iy·(n+1) + ix`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn msgfem_solver_solution(
    solver: *const MsgfemSolver,
    nloc: usize,
    buf: *mut f64,
    len: usize,
) -> MsgfemStatus {
    guard(|| {
        let ev = evaluate(solver, nloc)?;
        write_nodal(buf, len, &ev.gfem.solution)
    })
}

/// Nodal values of the fine reference solution.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn msgfem_solver_reference(
    solver: *const MsgfemSolver,
    buf: *mut f64,
    len: usize,
) -> MsgfemStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        write_nodal(buf, len, &s.fine.u)
    })
}

/// # Safety
/// `solver` must come from this library (or be NULL) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn msgfem_solver_free(solver: *mut MsgfemSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}
