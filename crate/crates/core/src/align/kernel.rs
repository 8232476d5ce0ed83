//! Batched alignment and the native kernel hook.
//!
//! A kernel is a shared library exporting [`KERNEL_SYMBOL`] with the
//! [`MasBatchFn`] signature (see `include/mmtts_mas.h`). It is loaded from
//! the path in [`KERNEL_ENV`], or from `libmmtts_mas_kernel.so` on the
//! default library search path. When nothing loads, the in-process
//! reference is used.

use std::ffi::{c_void, CString};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use super::{mas_into, AlignmentPath};
use crate::{Error, Result};

pub const KERNEL_ENV: &str = "MMTTS_MAS_KERNEL";
pub const KERNEL_SYMBOL: &str = "mas_batch_f32";
const DEFAULT_LIBRARY: &str = "libmmtts_mas_kernel.so";

pub const STATUS_OK: i32 = 0;
pub const STATUS_LAYOUT: i32 = -1;
pub const STATUS_NON_FINITE: i32 = -2;

/// `data` is `batch * p_max * f_max` floats, index `(b * p_max + p) * f_max + f`.
/// On success `out[b * f_max + f]` holds the phoneme of frame `f` for
/// `f < valid_f[b]` and `-1` beyond. Returns [`STATUS_OK`], a negative
/// status, or `b + 1` when item `b` has fewer frames than phonemes.
pub type MasBatchFn = unsafe extern "C" fn(
    data: *const f32,
    batch: usize,
    p_max: usize,
    f_max: usize,
    valid_p: *const i32,
    valid_f: *const i32,
    out: *mut i32,
) -> i32;

/// Padded batch of phoneme-by-frame score matrices, frame index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedLoglik {
    pub data: Vec<f32>,
    pub batch: usize,
    pub p_max: usize,
    pub f_max: usize,
    pub valid_p: Vec<usize>,
    pub valid_f: Vec<usize>,
}

impl BatchedLoglik {
    pub fn new(
        data: Vec<f32>,
        batch: usize,
        p_max: usize,
        f_max: usize,
        valid_p: Vec<usize>,
        valid_f: Vec<usize>,
    ) -> Result<Self> {
        let b = Self {
            data,
            batch,
            p_max,
            f_max,
            valid_p,
            valid_f,
        };
        b.check_layout()?;
        Ok(b)
    }

    /// Packs matrices (rows = phonemes) into the padded layout.
    pub fn from_items(items: &[ndarray::ArrayView2<'_, f32>]) -> Result<Self> {
        let p_max = items.iter().map(|m| m.nrows()).max().unwrap_or(0);
        let f_max = items.iter().map(|m| m.ncols()).max().unwrap_or(0);
        let mut data = vec![0.0f32; items.len() * p_max * f_max];
        for (b, m) in items.iter().enumerate() {
            for ((p, f), &v) in m.indexed_iter() {
                data[(b * p_max + p) * f_max + f] = v;
            }
        }
        Self::new(
            data,
            items.len(),
            p_max,
            f_max,
            items.iter().map(|m| m.nrows()).collect(),
            items.iter().map(|m| m.ncols()).collect(),
        )
    }

    pub fn check_layout(&self) -> Result<()> {
        let layout = |m: String| Err(Error::Layout(m));
        if self.data.len() != self.batch * self.p_max * self.f_max {
            return layout(format!(
                "data has {} values, expected {}x{}x{}",
                self.data.len(),
                self.batch,
                self.p_max,
                self.f_max
            ));
        }
        if self.valid_p.len() != self.batch || self.valid_f.len() != self.batch {
            return layout("length vectors must have one entry per item".into());
        }
        if self.p_max > i32::MAX as usize || self.f_max > i32::MAX as usize {
            return layout("dimensions exceed i32".into());
        }
        for (b, (&p, &f)) in self.valid_p.iter().zip(&self.valid_f).enumerate() {
            if p == 0 || p > self.p_max || f > self.f_max {
                return layout(format!(
                    "item {b}: lengths {p}x{f} outside 1..={}x{}",
                    self.p_max, self.f_max
                ));
            }
        }
        Ok(())
    }

    pub fn at(&self, b: usize, p: usize, f: usize) -> f32 {
        self.data[(b * self.p_max + p) * self.f_max + f]
    }
}

/// Loops the reference over items.
pub fn mas_batch_reference(batch: &BatchedLoglik) -> Result<Vec<AlignmentPath>> {
    batch.check_layout()?;
    let mut scratch = Vec::new();
    let mut paths = Vec::with_capacity(batch.batch);
    for b in 0..batch.batch {
        let (tp, tf) = (batch.valid_p[b], batch.valid_f[b]);
        if tf < tp {
            return Err(Error::InfeasibleItem {
                item: b,
                phonemes: tp,
                frames: tf,
            });
        }
        let mut out = vec![0usize; tf];
        mas_into(|p, f| batch.at(b, p, f), tp, tf, &mut scratch, &mut out)?;
        paths.push(AlignmentPath::from_assignment(out, tp)?);
    }
    Ok(paths)
}

/// The reference behind the kernel ABI.
///
/// # Safety
/// Pointers must be valid for the sizes implied by `batch`, `p_max` and
/// `f_max` as documented on [`MasBatchFn`].
#[no_mangle]
pub unsafe extern "C" fn mmtts_mas_batch_f32_reference(
    data: *const f32,
    batch: usize,
    p_max: usize,
    f_max: usize,
    valid_p: *const i32,
    valid_f: *const i32,
    out: *mut i32,
) -> i32 {
    let n = batch * p_max * f_max;
    if batch > 0 && (data.is_null() && n > 0 || valid_p.is_null() || valid_f.is_null() || out.is_null()) {
        return STATUS_LAYOUT;
    }
    if batch == 0 {
        return STATUS_OK;
    }
    let data = if n == 0 { &[][..] } else { std::slice::from_raw_parts(data, n) };
    let vp = std::slice::from_raw_parts(valid_p, batch);
    let vf = std::slice::from_raw_parts(valid_f, batch);
    let out = std::slice::from_raw_parts_mut(out, batch * f_max);
    let mut scratch = Vec::new();
    let mut frames = vec![0usize; f_max];
    for b in 0..batch {
        let (tp, tf) = (vp[b], vf[b]);
        if tp < 1 || tp as usize > p_max || tf < 0 || tf as usize > f_max {
            return STATUS_LAYOUT;
        }
        let (tp, tf) = (tp as usize, tf as usize);
        if tf < tp {
            return b as i32 + 1;
        }
        let at = |p: usize, f: usize| data[(b * p_max + p) * f_max + f];
        if mas_into(at, tp, tf, &mut scratch, &mut frames[..tf]).is_err() {
            return STATUS_NON_FINITE;
        }
        let row = &mut out[b * f_max..(b + 1) * f_max];
        for (f, slot) in row.iter_mut().enumerate() {
            *slot = if f < tf { frames[f] as i32 } else { -1 };
        }
    }
    STATUS_OK
}

/// Where batched alignment runs.
#[derive(Debug, Clone)]
pub enum MasBackend {
    Reference,
    Native { source: PathBuf, func: MasBatchFn },
}

impl MasBackend {
    /// Backend chosen once per process from the environment.
    pub fn detect() -> &'static MasBackend {
        static BACKEND: OnceLock<MasBackend> = OnceLock::new();
        BACKEND.get_or_init(|| {
            let backend = Self::from_env(std::env::var_os(KERNEL_ENV).as_deref().map(Path::new));
            log::debug!("alignment backend: {}", backend.name());
            backend
        })
    }

    /// `Some(path)` loads that library (`reference` or `off` forces the
    /// reference); `None` tries the default library name.
    pub fn from_env(path: Option<&Path>) -> MasBackend {
        match path {
            Some(p) if p.as_os_str().is_empty() => Self::try_default(),
            Some(p) if p == Path::new("reference") || p == Path::new("off") => MasBackend::Reference,
            Some(p) => Self::load(p).unwrap_or_else(|e| {
                log::warn!("{e}; using the reference alignment");
                MasBackend::Reference
            }),
            None => Self::try_default(),
        }
    }

    fn try_default() -> MasBackend {
        Self::load(Path::new(DEFAULT_LIBRARY)).unwrap_or(MasBackend::Reference)
    }

    /// Wraps an in-process function with the kernel ABI.
    pub fn from_fn(func: MasBatchFn) -> MasBackend {
        MasBackend::Native {
            source: PathBuf::from("<in-process>"),
            func,
        }
    }

    /// Opens a shared library and resolves [`KERNEL_SYMBOL`]. The library
    /// stays loaded for the life of the process.
    #[cfg(unix)]
    pub fn load(path: &Path) -> Result<MasBackend> {
        use std::os::unix::ffi::OsStrExt;
        let unavailable = |why: String| Error::Config(format!("alignment kernel {}: {why}", path.display()));
        let cpath = CString::new(path.as_os_str().as_bytes()).map_err(|e| unavailable(e.to_string()))?;
        let symbol = CString::new(KERNEL_SYMBOL).unwrap();
        // SAFETY: plain dlopen/dlsym calls on NUL-terminated strings.
        unsafe {
            let handle: *mut c_void = libc::dlopen(cpath.as_ptr(), libc::RTLD_NOW | libc::RTLD_LOCAL);
            if handle.is_null() {
                return Err(unavailable(dl_error()));
            }
            let sym = libc::dlsym(handle, symbol.as_ptr());
            if sym.is_null() {
                libc::dlclose(handle);
                return Err(unavailable(format!("missing symbol {KERNEL_SYMBOL}")));
            }
            Ok(MasBackend::Native {
                source: path.to_path_buf(),
                func: std::mem::transmute::<*mut c_void, MasBatchFn>(sym),
            })
        }
    }

    #[cfg(not(unix))]
    pub fn load(path: &Path) -> Result<MasBackend> {
        Err(Error::Config(format!(
            "alignment kernel {}: dynamic loading is only supported on unix",
            path.display()
        )))
    }

    pub fn name(&self) -> String {
        match self {
            MasBackend::Reference => "reference".into(),
            MasBackend::Native { source, .. } => format!("native ({})", source.display()),
        }
    }

    pub fn is_native(&self) -> bool {
        matches!(self, MasBackend::Native { .. })
    }

    pub fn run(&self, batch: &BatchedLoglik) -> Result<Vec<AlignmentPath>> {
        match self {
            MasBackend::Reference => mas_batch_reference(batch),
            MasBackend::Native { func, .. } => run_native(*func, batch),
        }
    }
}

#[cfg(unix)]
fn dl_error() -> String {
    // SAFETY: dlerror returns null or a NUL-terminated thread-local string.
    unsafe {
        let msg = libc::dlerror();
        if msg.is_null() {
            "dlopen failed".into()
        } else {
            std::ffi::CStr::from_ptr(msg).to_string_lossy().into_owned()
        }
    }
}

fn run_native(func: MasBatchFn, batch: &BatchedLoglik) -> Result<Vec<AlignmentPath>> {
    batch.check_layout()?;
    // the kernel sees every item's valid region, so report infeasible items first
    for b in 0..batch.batch {
        if batch.valid_f[b] < batch.valid_p[b] {
            return Err(Error::InfeasibleItem {
                item: b,
                phonemes: batch.valid_p[b],
                frames: batch.valid_f[b],
            });
        }
    }
    let vp: Vec<i32> = batch.valid_p.iter().map(|&v| v as i32).collect();
    let vf: Vec<i32> = batch.valid_f.iter().map(|&v| v as i32).collect();
    let mut out = vec![-1i32; batch.batch * batch.f_max];
    // SAFETY: buffers match the sizes documented on MasBatchFn.
    let status = unsafe {
        func(
            batch.data.as_ptr(),
            batch.batch,
            batch.p_max,
            batch.f_max,
            vp.as_ptr(),
            vf.as_ptr(),
            out.as_mut_ptr(),
        )
    };
    match status {
        STATUS_OK => {}
        STATUS_NON_FINITE => return Err(Error::NonFinite("batched loglik".into())),
        s if s > 0 => {
            let item = (s - 1) as usize;
            return Err(Error::InfeasibleItem {
                item,
                phonemes: batch.valid_p.get(item).copied().unwrap_or(0),
                frames: batch.valid_f.get(item).copied().unwrap_or(0),
            });
        }
        s => return Err(Error::Layout(format!("alignment kernel returned status {s}"))),
    }
    (0..batch.batch)
        .map(|b| {
            let row = &out[b * batch.f_max..b * batch.f_max + batch.valid_f[b]];
            let assignment = row
                .iter()
                .map(|&p| usize::try_from(p).map_err(|_| Error::Layout(format!("kernel wrote {p} for item {b}"))))
                .collect::<Result<Vec<_>>>()?;
            AlignmentPath::from_assignment(assignment, batch.valid_p[b])
                .map_err(|e| Error::Layout(format!("kernel path for item {b}: {e}")))
        })
        .collect()
}

/// Aligns every item with the detected backend.
pub fn mas_batch(batch: &BatchedLoglik) -> Result<Vec<AlignmentPath>> {
    MasBackend::detect().run(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::mas;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(seed: u64, n: usize, p_hi: usize, f_hi: usize) -> (BatchedLoglik, Vec<Array2<f32>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<Array2<f32>> = (0..n)
            .map(|_| {
                let p = rng.random_range(1..=p_hi);
                let f = rng.random_range(p..=f_hi);
                Array2::from_shape_fn((p, f), |_| rng.random_range(-8.0f32..0.0))
            })
            .collect();
        let views: Vec<_> = items.iter().map(|m| m.view()).collect();
        (BatchedLoglik::from_items(&views).unwrap(), items)
    }

    #[test]
    fn reference_batch_equals_single() {
        let (batch, items) = random_batch(5, 32, 12, 40);
        let paths = mas_batch_reference(&batch).unwrap();
        for (path, m) in paths.iter().zip(&items) {
            assert_eq!(path, &mas(m.view(), m.nrows(), m.ncols()).unwrap());
        }
    }

    #[test]
    fn abi_reference_through_native_path() {
        let (batch, _) = random_batch(6, 20, 10, 30);
        let native = MasBackend::from_fn(mmtts_mas_batch_f32_reference);
        assert!(native.is_native());
        assert_eq!(native.run(&batch).unwrap(), mas_batch_reference(&batch).unwrap());
    }

    #[test]
    fn native_output_is_validated() {
        unsafe extern "C" fn broken(
            _: *const f32,
            batch: usize,
            _: usize,
            f_max: usize,
            _: *const i32,
            _: *const i32,
            out: *mut i32,
        ) -> i32 {
            for i in 0..batch * f_max {
                *out.add(i) = 0;
            }
            STATUS_OK
        }
        let (batch, _) = random_batch(7, 3, 4, 8);
        let err = MasBackend::from_fn(broken).run(&batch).unwrap_err();
        assert_eq!(err.kind(), "layout");
    }

    #[test]
    fn infeasible_item_is_named() {
        let data = vec![0.0f32; 2 * 3 * 4];
        let batch = BatchedLoglik::new(data, 2, 3, 4, vec![2, 3], vec![4, 2]).unwrap();
        for backend in [MasBackend::Reference, MasBackend::from_fn(mmtts_mas_batch_f32_reference)] {
            match backend.run(&batch).unwrap_err() {
                Error::InfeasibleItem { item, .. } => assert_eq!(item, 1),
                e => panic!("unexpected {e:?}"),
            }
        }
    }

    #[test]
    fn abi_reports_infeasible_item() {
        let data = vec![0.0f32; 2 * 3 * 4];
        let (vp, vf) = ([1i32, 3], [4i32, 2]);
        let mut out = vec![0i32; 8];
        let status = unsafe {
            mmtts_mas_batch_f32_reference(data.as_ptr(), 2, 3, 4, vp.as_ptr(), vf.as_ptr(), out.as_mut_ptr())
        };
        assert_eq!(status, 2);
    }

    #[test]
    fn layout_errors() {
        assert_eq!(
            BatchedLoglik::new(vec![0.0; 5], 1, 2, 3, vec![1], vec![3]).unwrap_err().kind(),
            "layout"
        );
        assert_eq!(
            BatchedLoglik::new(vec![0.0; 6], 1, 2, 3, vec![3], vec![3]).unwrap_err().kind(),
            "layout"
        );
        assert_eq!(
            BatchedLoglik::new(vec![0.0; 6], 1, 2, 3, vec![0], vec![3]).unwrap_err().kind(),
            "layout"
        );
    }

    #[test]
    fn missing_library_falls_back() {
        let backend = MasBackend::from_env(Some(Path::new("/nonexistent/libkernel.so")));
        assert!(!backend.is_native());
        assert!(!MasBackend::from_env(Some(Path::new("reference"))).is_native());
        assert!(MasBackend::load(Path::new("/nonexistent/libkernel.so")).is_err());
    }
}
