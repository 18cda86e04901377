//! C ABI over the `wesbench` library.
//!
//! Every fallible function returns a [`WesStatus`]; on failure the message
//! is available from [`wes_last_error`] on the same thread. Objects are
//! opaque handles created by `*_new`/`*_open`/`*_load` functions and
//! released with the matching `*_free`. Arrays are passed as pointer plus
//! length, matrices row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DMatrix;
use wesbench::bench::WetbFile;
use wesbench::metrics::{coverage, kl_divergence, radius_of_gyration, w1_distance, Histogram1D};
use wesbench::msm::{stationary_distribution, TransitionMatrix};
use wesbench::potentials::PotentialSpec;
use wesbench::tica::TicaModel;
use wesbench::{Conformation, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WesStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numeric = 4,
    Io = 5,
    Format = 6,
    Config = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WesStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::ParticleMismatch(..) => WesStatus::DimensionMismatch,
        Error::Io { .. } => WesStatus::Io,
        Error::Format { .. } | Error::Json(_) => WesStatus::Format,
        Error::Config(_) => WesStatus::Config,
        e if e.is_numeric() => WesStatus::Numeric,
        _ => WesStatus::InvalidArgument,
    }
}

struct Null;

enum Failure {
    Null,
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<Null> for Failure {
    fn from(_: Null) -> Self {
        Failure::Null
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WesStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WesStatus::Ok,
        Ok(Err(Failure::Null)) => {
            set_error("null pointer argument".into());
            WesStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            WesStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Null> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Null);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Null> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Null);
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Null> {
    p.as_mut().ok_or(Null)
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, Null> {
    p.as_ref().ok_or(Null)
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::Null);
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

fn expect_len(expected: usize, found: usize) -> Result<(), Failure> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found }.into());
    }
    Ok(())
}

fn product(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Error::InvalidArgument("array size overflows".into()).into())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn wes_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wes_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A toy potential energy surface.
pub struct WesPotential(PotentialSpec);

/// `kind`: 0 double well, 1 Mueller-Brown, 2 coarse-grained chain, each
/// with default parameters at temperature `kt`.
///
/// # Safety
/// `out_handle` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wes_potential_new(kind: u32, kt: f64, out_handle: *mut *mut WesPotential) -> WesStatus {
    guard(|| {
        let slot = out(out_handle)?;
        let spec = match kind {
            0 => PotentialSpec::double_well(kt),
            1 => PotentialSpec::mueller_brown(kt),
            2 => PotentialSpec::cg_chain(kt),
            _ => return Err(Error::InvalidArgument(format!("unknown potential kind {kind}")).into()),
        };
        spec.validate()?;
        *slot = Box::into_raw(Box::new(WesPotential(spec)));
        Ok(())
    })
}

/// Builds a potential from the JSON `system` object of a benchmark config.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_handle` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wes_potential_from_json(json: *const c_char, out_handle: *mut *mut WesPotential) -> WesStatus {
    guard(|| {
        let slot = out(out_handle)?;
        if json.is_null() {
            return Err(Failure::Null);
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Error::InvalidArgument("JSON is not valid UTF-8".into()))?;
        let spec: PotentialSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        *slot = Box::into_raw(Box::new(WesPotential(spec)));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wes_potential_free(p: *mut WesPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of coordinates (particles times dimensions) of a conformation.
///
/// # Safety
/// `p` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wes_potential_n_coords(p: *const WesPotential) -> usize {
    p.as_ref().map_or(0, |p| p.0.n_particles() * p.0.dims())
}

/// Energy of the flat coordinates `x`.
///
/// # Safety
/// `x` must hold `len` values and `energy` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wes_potential_energy(
    p: *const WesPotential,
    x: *const f64,
    len: usize,
    energy: *mut f64,
) -> WesStatus {
    guard(|| {
        let p = obj(p)?;
        expect_len(p.0.n_particles() * p.0.dims(), len)?;
        let x = slice(x, len)?;
        let slot = out(energy)?;
        let c = Conformation::new(x.to_vec(), p.0.dims())?;
        *slot = p.0.energy(&c)?;
        Ok(())
    })
}

/// Force `-grad E` at `x`, written to `force` (same length).
///
/// # Safety
/// `x` and `force` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn wes_potential_force(
    p: *const WesPotential,
    x: *const f64,
    len: usize,
    force: *mut f64,
) -> WesStatus {
    guard(|| {
        let p = obj(p)?;
        expect_len(p.0.n_particles() * p.0.dims(), len)?;
        let x = slice(x, len)?;
        let dst = slice_mut(force, len)?;
        let c = Conformation::new(x.to_vec(), p.0.dims())?;
        dst.copy_from_slice(&p.0.force(&c)?);
        Ok(())
    })
}

/// A fitted TICA model.
pub struct WesTicaModel(TicaModel);

/// Loads a `tica_model.json` file.
///
/// # Safety
/// `file` must be NUL-terminated and `out_handle` valid.
#[no_mangle]
pub unsafe extern "C" fn wes_tica_load(file: *const c_char, out_handle: *mut *mut WesTicaModel) -> WesStatus {
    guard(|| {
        let slot = out(out_handle)?;
        let p = path(file)?;
        let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
        let model: TicaModel = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: p.to_path_buf(),
            reason: e.to_string(),
        })?;
        *slot = Box::into_raw(Box::new(WesTicaModel(model)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wes_tica_free(m: *mut WesTicaModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wes_tica_n_components(m: *const WesTicaModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_components)
}

/// # Safety
/// `m` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wes_tica_n_features(m: *const WesTicaModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_features())
}

/// Projects `n_frames` conformations of `n_particles x dims` coordinates
/// onto the model's TICs; `tics` receives `n_frames x n_components`.
///
/// # Safety
/// Buffers must match the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn wes_tica_project_frames(
    m: *const WesTicaModel,
    coords: *const f64,
    n_frames: usize,
    n_particles: usize,
    dims: usize,
    tics: *mut f64,
    tics_len: usize,
) -> WesStatus {
    guard(|| {
        let m = obj(m)?;
        let per = product(n_particles, dims)?;
        let x = slice(coords, product(n_frames, per)?)?;
        expect_len(product(n_frames, m.0.n_components)?, tics_len)?;
        let dst = slice_mut(tics, tics_len)?;
        let frames: Vec<Conformation> = x
            .chunks_exact(per.max(1))
            .map(|c| Conformation::new(c.to_vec(), dims))
            .collect::<Result<_, _>>()?;
        let proj = m.0.project_frames(&frames)?;
        for r in 0..proj.nrows() {
            for c in 0..proj.ncols() {
                dst[r * proj.ncols() + c] = proj[(r, c)];
            }
        }
        Ok(())
    })
}

/// A WETB trajectory file loaded in memory.
pub struct WesTrajectory(WetbFile);

/// # Safety
/// `file` must be NUL-terminated and `out_handle` valid.
#[no_mangle]
pub unsafe extern "C" fn wes_trajectory_open(file: *const c_char, out_handle: *mut *mut WesTrajectory) -> WesStatus {
    guard(|| {
        let slot = out(out_handle)?;
        let t = WetbFile::read(path(file)?)?;
        *slot = Box::into_raw(Box::new(WesTrajectory(t)));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wes_trajectory_free(t: *mut WesTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Frames, particles per frame and dimensions; any output may be null.
///
/// # Safety
/// `t` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wes_trajectory_shape(
    t: *const WesTrajectory,
    n_frames: *mut usize,
    n_particles: *mut usize,
    dims: *mut usize,
) -> WesStatus {
    guard(|| {
        let t = obj(t)?;
        for (p, v) in [
            (n_frames, t.0.n_frames()),
            (n_particles, t.0.n_particles),
            (dims, t.0.dims),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the per-frame weights; `len` must equal the frame count.
///
/// # Safety
/// `weights` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn wes_trajectory_weights(t: *const WesTrajectory, weights: *mut f64, len: usize) -> WesStatus {
    guard(|| {
        let t = obj(t)?;
        expect_len(t.0.weights.len(), len)?;
        slice_mut(weights, len)?.copy_from_slice(&t.0.weights);
        Ok(())
    })
}

/// Copies the single-precision coordinates, frame-major.
///
/// # Safety
/// `coords` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn wes_trajectory_coords(t: *const WesTrajectory, coords: *mut f32, len: usize) -> WesStatus {
    guard(|| {
        let t = obj(t)?;
        expect_len(t.0.coords.len(), len)?;
        slice_mut(coords, len)?.copy_from_slice(&t.0.coords);
        Ok(())
    })
}

/// Stationary distribution of the row-stochastic `n x n` matrix `t`.
///
/// # Safety
/// `t` must hold `n * n` values and `pi` `n` values.
#[no_mangle]
pub unsafe extern "C" fn wes_stationary_distribution(t: *const f64, n: usize, pi: *mut f64) -> WesStatus {
    guard(|| {
        let t = slice(t, product(n, n)?)?;
        let dst = slice_mut(pi, n)?;
        let dense = DMatrix::from_row_slice(n, n, t);
        let result = stationary_distribution(&TransitionMatrix::from_dense(&dense)?)?;
        dst.copy_from_slice(&result);
        Ok(())
    })
}

unsafe fn histograms(
    edges: *const f64,
    n_bins: usize,
    p: *const f64,
    q: *const f64,
) -> Result<(Histogram1D, Histogram1D), Failure> {
    let e = slice(edges, n_bins + 1)?.to_vec();
    let hp = Histogram1D::new(e.clone(), slice(p, n_bins)?.to_vec())?;
    let hq = Histogram1D::new(e, slice(q, n_bins)?.to_vec())?;
    Ok((hp, hq))
}

/// Wasserstein-1 distance between two normalized histograms on the shared
/// `n_bins + 1` edges.
///
/// # Safety
/// `edges` must hold `n_bins + 1` values, `p` and `q` `n_bins` each.
#[no_mangle]
pub unsafe extern "C" fn wes_w1_distance(
    edges: *const f64,
    n_bins: usize,
    p: *const f64,
    q: *const f64,
    result: *mut f64,
) -> WesStatus {
    guard(|| {
        let slot = out(result)?;
        let (hp, hq) = histograms(edges, n_bins, p, q)?;
        *slot = w1_distance(&hp, &hq)?;
        Ok(())
    })
}

/// `D_KL(p || q)` in nats with both masses floored at `epsilon`.
///
/// # Safety
/// As for [`wes_w1_distance`].
#[no_mangle]
pub unsafe extern "C" fn wes_kl_divergence(
    edges: *const f64,
    n_bins: usize,
    p: *const f64,
    q: *const f64,
    epsilon: f64,
    result: *mut f64,
) -> WesStatus {
    guard(|| {
        let slot = out(result)?;
        let (hp, hq) = histograms(edges, n_bins, p, q)?;
        *slot = kl_divergence(&hp, &hq, epsilon)?;
        Ok(())
    })
}

/// Radius of gyration of one conformation (equal masses).
///
/// # Safety
/// `coords` must hold `n_particles * dims` values.
#[no_mangle]
pub unsafe extern "C" fn wes_radius_of_gyration(
    coords: *const f64,
    n_particles: usize,
    dims: usize,
    result: *mut f64,
) -> WesStatus {
    guard(|| {
        let slot = out(result)?;
        let x = slice(coords, product(n_particles, dims)?)?;
        *slot = radius_of_gyration(&Conformation::new(x.to_vec(), dims)?);
        Ok(())
    })
}

/// Percentage of reference-occupied cells of a `grid_n x grid_n` grid that
/// model points visit; both point sets are `n x 2` row-major.
///
/// # Safety
/// `gt` must hold `2 * n_gt` values and `model` `2 * n_model`.
#[no_mangle]
pub unsafe extern "C" fn wes_coverage(
    gt: *const f64,
    n_gt: usize,
    model: *const f64,
    n_model: usize,
    grid_n: usize,
    result: *mut f64,
) -> WesStatus {
    guard(|| {
        let slot = out(result)?;
        let g = DMatrix::from_row_slice(n_gt, 2, slice(gt, product(n_gt, 2)?)?);
        let m = DMatrix::from_row_slice(n_model, 2, slice(model, product(n_model, 2)?)?);
        *slot = coverage(&g, &m, grid_n)?;
        Ok(())
    })
}
