//! C ABI over `vicsek-core`.
//!
//! Graphs and spectra are opaque handles created by `vk_*_build`/`vk_*_compute`
//! and released with the matching `vk_*_free`. Every fallible call returns a
//! [`VkStatus`]; the message of the last failure on the calling thread is
//! available through [`vk_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use vicsek_core::spectral::{eigendecompose, SpectralDecomposition};
use vicsek_core::{Error, LevelGraph};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VkStatus {
    VkOk = 0,
    VkNullPointer = 1,
    VkInvalidArgument = 2,
    VkOutOfRange = 3,
    VkSolverFailure = 4,
    VkBufferTooSmall = 5,
    VkPanic = 6,
}

/// Level-m graph approximation.
pub struct VkGraph {
    inner: Arc<LevelGraph>,
}

/// Eigendecomposition of `-Δ` on a graph.
pub struct VkSpectrum {
    inner: SpectralDecomposition,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VkStatus {
    match e {
        Error::InvalidVertex(_) | Error::InvalidEdge(_) | Error::LevelTooLarge { .. } | Error::SizeCap { .. } => {
            VkStatus::VkOutOfRange
        }
        Error::SolverFailure(_) => VkStatus::VkSolverFailure,
        _ => VkStatus::VkInvalidArgument,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (VkStatus, String)>) -> VkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VkStatus::VkOk,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            VkStatus::VkPanic
        }
    }
}

fn core<T>(r: vicsek_core::Result<T>) -> Result<T, (VkStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (VkStatus, String) {
    (VkStatus::VkNullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (VkStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copy `src` into `buf[0..len]`.
unsafe fn fill(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (VkStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err((
            VkStatus::VkBufferTooSmall,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Build the level-`level` graph into `*out`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_build(level: u32, out: *mut *mut VkGraph) -> VkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = core(LevelGraph::build(level))?;
        *out = Box::into_raw(Box::new(VkGraph { inner: Arc::new(g) }));
        Ok(())
    })
}

/// Release a graph; null is ignored.
///
/// # Safety
/// `g` must come from [`vk_graph_build`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_free(g: *mut VkGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Level of the graph, or 0 for null.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_level(g: *const VkGraph) -> u32 {
    g.as_ref().map_or(0, |g| g.inner.level())
}

/// Number of vertices, or 0 for null.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_vertex_count(g: *const VkGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.vertex_count())
}

/// Number of edges, or 0 for null.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_edge_count(g: *const VkGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.edge_count())
}

/// Id of the center vertex, or `SIZE_MAX` for null.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_root(g: *const VkGraph) -> usize {
    g.as_ref().map_or(usize::MAX, |g| g.inner.root())
}

/// Planar position of vertex `v` in `[-1, 1]^2`.
///
/// # Safety
/// `g` must be a live graph handle; `x` and `y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_position(g: *const VkGraph, v: usize, x: *mut f64, y: *mut f64) -> VkStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        if x.is_null() || y.is_null() {
            return Err(null("output"));
        }
        let (px, py) = core(g.inner.vertex(v))?.position();
        *x = px;
        *y = py;
        Ok(())
    })
}

/// Geodesic distance between vertices `u` and `v`.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vk_graph_distance(g: *const VkGraph, u: usize, v: usize, out: *mut f64) -> VkStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = core(g.inner.geodesic_distance(u, v))?;
        Ok(())
    })
}

/// Eigendecompose `-Δ` on `g` into `*out`. The spectrum keeps its own
/// reference to the graph, so `g` may be freed afterwards.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vk_spectrum_compute(g: *const VkGraph, out: *mut *mut VkSpectrum) -> VkStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sd = core(eigendecompose(g.inner.clone()))?;
        *out = Box::into_raw(Box::new(VkSpectrum { inner: sd }));
        Ok(())
    })
}

/// Release a spectrum; null is ignored.
///
/// # Safety
/// `s` must come from [`vk_spectrum_compute`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vk_spectrum_free(s: *mut VkSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of eigenpairs (the vertex count), or 0 for null.
///
/// # Safety
/// `s` must be null or a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn vk_spectrum_len(s: *const VkSpectrum) -> usize {
    s.as_ref().map_or(0, |s| s.inner.len())
}

/// Eigenvalues in ascending order into `buf[0..len]`.
///
/// # Safety
/// `s` must be a live spectrum handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vk_spectrum_eigenvalues(s: *const VkSpectrum, buf: *mut f64, len: usize) -> VkStatus {
    guard(|| fill(deref(s, "spectrum")?.inner.eigenvalues(), buf, len))
}

/// Largest residual `‖LΦ − λΦ‖` of the decomposition.
///
/// # Safety
/// `s` must be a live spectrum handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vk_spectrum_max_residual(s: *const VkSpectrum, out: *mut f64) -> VkStatus {
    guard(|| {
        let s = deref(s, "spectrum")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.inner.max_residual();
        Ok(())
    })
}

/// Heat kernel column `y ↦ p_t(x, y)` into `buf[0..len]`.
///
/// # Safety
/// `s` must be a live spectrum handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vk_heat_column(s: *const VkSpectrum, t: f64, x: usize, buf: *mut f64, len: usize) -> VkStatus {
    guard(|| {
        let col = core(deref(s, "spectrum")?.inner.heat_column(t, x))?;
        fill(&col, buf, len)
    })
}

/// On-diagonal value `p_t(x, x)`.
///
/// # Safety
/// `s` must be a live spectrum handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vk_heat_diagonal(s: *const VkSpectrum, t: f64, x: usize, out: *mut f64) -> VkStatus {
    guard(|| {
        let s = deref(s, "spectrum")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = core(s.inner.heat_diagonal(t, x))?;
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
