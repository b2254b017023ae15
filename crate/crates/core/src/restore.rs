//! Latent frame restoration from the centre frame, its warped neighbours and
//! the sharpness prior.
//!
//! Three restorers are available:
//!
//! * `average` — plain mean of the centre and aligned neighbours.
//! * `fusion` — sharpness-weighted fusion; each neighbour is weighted by
//!   `exp(−D_j/σ_w²)` times its warp validity, the centre by `κ`.
//! * `external` — an out-of-process model fed the concatenated guidance
//!   tensor (see [`guidance_tensor`]).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::prior::{patch_distance, sharpness_from_distances, DistanceMap, PriorParams, SharpnessMap};
use crate::warp::WarpedFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    /// Distance-to-weight temperature.
    pub sigma_w: f64,
    /// Weight of the centre frame.
    pub kappa: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            sigma_w: 0.1,
            kappa: 1.0,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_w > 0.0 && self.sigma_w.is_finite()) {
            return Err(Error::Config(format!("sigma_w must be positive, got {}", self.sigma_w)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// One aligned neighbour and its patch distance to the centre.
#[derive(Debug, Clone)]
pub struct Guidance {
    /// Temporal offset from the centre frame (`+1` is the next frame).
    pub offset: isize,
    pub warped: WarpedFrame,
    pub distance: DistanceMap,
}

#[derive(Debug, Clone)]
pub struct RestorationInput {
    pub center: Frame,
    pub neighbors: Vec<Guidance>,
    pub sharpness: SharpnessMap,
}

impl RestorationInput {
    /// Computes patch distances and the sharpness map for the given warped
    /// neighbours.
    pub fn build(center: Frame, warped: Vec<(isize, WarpedFrame)>, prior: &PriorParams) -> Result<Self> {
        let neighbors = warped
            .into_iter()
            .map(|(offset, w)| {
                let distance = patch_distance(&w, &center, prior)?;
                Ok(Guidance {
                    offset,
                    warped: w,
                    distance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dists: Vec<&DistanceMap> = neighbors.iter().map(|g| &g.distance).collect();
        let sharpness = sharpness_from_distances(center.width(), center.height(), &dists)?;
        Ok(RestorationInput {
            center,
            neighbors,
            sharpness,
        })
    }

    /// The usual three-frame input with explicit distance maps.
    pub fn three(
        center: Frame,
        warped_next: WarpedFrame,
        warped_prev: WarpedFrame,
        d_next: DistanceMap,
        d_prev: DistanceMap,
        sharpness: SharpnessMap,
    ) -> Self {
        RestorationInput {
            center,
            neighbors: vec![
                Guidance {
                    offset: 1,
                    warped: warped_next,
                    distance: d_next,
                },
                Guidance {
                    offset: -1,
                    warped: warped_prev,
                    distance: d_prev,
                },
            ],
            sharpness,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.center.width(), self.center.height());
        for g in &self.neighbors {
            g.warped.image.ensure_same_shape(&self.center, "restoration neighbour")?;
            if g.warped.validity.len() != w * h || g.distance.width != w || g.distance.height != h {
                return Err(Error::Shape(format!(
                    "neighbour {:+} planes do not match the {w}x{h} centre",
                    g.offset
                )));
            }
        }
        if self.sharpness.width != w || self.sharpness.height != h {
            return Err(Error::Shape("sharpness map does not match the centre".into()));
        }
        Ok(())
    }
}

/// `out = (Σ_j Ĩ_j + I) / (1 + n)`; with two neighbours this is the plain
/// three-frame update.
pub fn fuse_average(input: &RestorationInput) -> Result<Frame> {
    input.validate()?;
    let c = &input.center;
    let n = input.neighbors.len() as f64 + 1.0;
    let data = (0..c.data().len())
        .map(|k| {
            let mut acc = 0.0f64;
            for g in &input.neighbors {
                acc += g.warped.image.data()[k] as f64;
            }
            acc += c.data()[k] as f64;
            (acc / n) as f32
        })
        .collect();
    Frame::from_clamped(c.width(), c.height(), c.channels(), data)
}

/// Sharpness-weighted fusion. Reduces to [`fuse_average`] exactly when every
/// distance is zero, every mask is valid and `κ = 1`.
pub fn fuse_sharpness_weighted(input: &RestorationInput, params: &FusionParams) -> Result<Frame> {
    input.validate()?;
    params.validate()?;
    let c = &input.center;
    let ch = c.channels();
    let inv_s2 = 1.0 / (params.sigma_w * params.sigma_w);
    let mut data = Vec::with_capacity(c.data().len());
    let mut weights = vec![0f64; input.neighbors.len()];
    for p in 0..c.pixel_count() {
        for (w, g) in weights.iter_mut().zip(&input.neighbors) {
            let d = g.distance.values[p];
            if d.is_nan() || d < 0.0 {
                return Err(Error::Value(format!("invalid patch distance {d}")));
            }
            *w = if g.warped.validity[p] { (-d * inv_s2).exp() } else { 0.0 };
        }
        let total = weights.iter().sum::<f64>() + params.kappa;
        for k in p * ch..(p + 1) * ch {
            let mut acc = 0.0f64;
            for (w, g) in weights.iter().zip(&input.neighbors) {
                acc += w * g.warped.image.data()[k] as f64;
            }
            acc += params.kappa * c.data()[k] as f64;
            data.push((acc / total) as f32);
        }
    }
    Frame::from_clamped(c.width(), c.height(), ch, data)
}

/// Planar NCHW tensor with batch size 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn shape(&self) -> [usize; 4] {
        [1, self.channels, self.height, self.width]
    }

    fn push_frame(&mut self, f: &Frame) {
        let ch = f.channels();
        for c in 0..ch {
            self.data.extend(f.data().iter().skip(c).step_by(ch));
        }
        self.channels += ch;
    }
}

const TENSOR_MAGIC: &[u8; 4] = b"TNSR";

/// Wire format: `TNSR`, four little-endian u32 dims `[1, C, H, W]`, then
/// `C·H·W` little-endian f32 samples in planar order.
pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * t.data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    for d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in &t.data {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 20 || &bytes[0..4] != TENSOR_MAGIC {
        return Err(Error::Contract("output is not a TNSR tensor".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (n, c, h, w) = (dim(0), dim(1), dim(2), dim(3));
    if n != 1 {
        return Err(Error::Contract(format!("batch size {n}, expected 1")));
    }
    let len = c * h * w;
    if bytes.len() != 20 + 4 * len {
        return Err(Error::Contract(format!(
            "payload of {} bytes for shape [1, {c}, {h}, {w}]",
            bytes.len() - 20
        )));
    }
    let data = bytes[20..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Tensor {
        channels: c,
        height: h,
        width: w,
        data,
    })
}

/// Concatenates the guidance planes in model input order: neighbours with
/// positive offsets (furthest first), the centre, neighbours with negative
/// offsets (nearest first), then the sharpness map. For a three-frame window
/// this is `[Ĩ₊; I; Ĩ₋; S]`.
pub fn guidance_tensor(input: &RestorationInput) -> Result<Tensor> {
    input.validate()?;
    let c = &input.center;
    let mut t = Tensor {
        channels: 0,
        height: c.height(),
        width: c.width(),
        data: Vec::new(),
    };
    let mut ahead: Vec<&Guidance> = input.neighbors.iter().filter(|g| g.offset > 0).collect();
    ahead.sort_by_key(|g| std::cmp::Reverse(g.offset));
    let mut behind: Vec<&Guidance> = input.neighbors.iter().filter(|g| g.offset < 0).collect();
    behind.sort_by_key(|g| std::cmp::Reverse(g.offset));
    for g in &ahead {
        t.push_frame(&g.warped.image);
    }
    t.push_frame(c);
    for g in &behind {
        t.push_frame(&g.warped.image);
    }
    t.data.extend(input.sharpness.values.iter().map(|s| *s as f32));
    t.channels += 1;
    Ok(t)
}

/// Converts a model output back into a frame, enforcing the output contract.
pub fn tensor_to_frame(t: &Tensor, width: usize, height: usize) -> Result<Frame> {
    if t.width != width || t.height != height {
        return Err(Error::Contract(format!(
            "output is {}x{}, expected {width}x{height}",
            t.width, t.height
        )));
    }
    if t.channels != 1 && t.channels != 3 {
        return Err(Error::Contract(format!("output has {} channels, expected 1 or 3", t.channels)));
    }
    if t.data.len() != t.channels * width * height {
        return Err(Error::Contract("output payload length mismatch".into()));
    }
    if t.data.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract("output contains non-finite samples".into()));
    }
    let plane = width * height;
    let mut data = Vec::with_capacity(t.data.len());
    for p in 0..plane {
        for c in 0..t.channels {
            data.push(t.data[c * plane + p]);
        }
    }
    Frame::from_clamped(width, height, t.channels, data)
}

/// A learned restorer consuming the guidance tensor.
pub trait GuidanceModel: Send {
    fn infer(&mut self, input: &Tensor) -> Result<Tensor>;
}

/// Runs an executable per frame, streaming the input tensor on stdin and
/// reading the output tensor from stdout.
#[derive(Debug, Clone)]
pub struct CommandModel {
    program: PathBuf,
}

impl CommandModel {
    pub fn new(program: &Path) -> Result<Self> {
        if !program.is_file() {
            return Err(Error::Backend(format!("model {} not found", program.display())));
        }
        Ok(CommandModel {
            program: program.to_path_buf(),
        })
    }
}

impl GuidanceModel for CommandModel {
    fn infer(&mut self, input: &Tensor) -> Result<Tensor> {
        let backend = |what: &str, e: std::io::Error| {
            Error::Backend(format!("{} {what}: {e}", self.program.display()))
        };
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| backend("failed to start", e))?;
        let payload = encode_tensor(input);
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&payload));
        let mut stderr = child.stderr.take().expect("piped stderr");
        let logs = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let mut out = Vec::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_end(&mut out)
            .map_err(|e| backend("read failed", e))?;
        let status = child.wait().map_err(|e| backend("wait failed", e))?;
        // a model may legitimately exit before draining stdin
        let _ = writer.join();
        if !status.success() {
            let err = logs.join().unwrap_or_default();
            return Err(Error::Backend(format!(
                "{} exited with {status}: {}",
                self.program.display(),
                err.trim()
            )));
        }
        decode_tensor(&out)
    }
}

pub struct ExternalRestorer {
    model: Mutex<Box<dyn GuidanceModel>>,
}

impl ExternalRestorer {
    pub fn new(model: Box<dyn GuidanceModel>) -> Self {
        ExternalRestorer { model: Mutex::new(model) }
    }

    pub fn restore(&self, input: &RestorationInput) -> Result<Frame> {
        let tensor = guidance_tensor(input)?;
        let out = {
            let mut model = self
                .model
                .lock()
                .map_err(|_| Error::Backend("model poisoned by an earlier panic".into()))?;
            model.infer(&tensor)?
        };
        tensor_to_frame(&out, input.center.width(), input.center.height())
    }
}

impl std::fmt::Debug for ExternalRestorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ExternalRestorer")
    }
}

#[derive(Debug)]
pub enum Restorer {
    Average,
    Fusion(FusionParams),
    External(ExternalRestorer),
}

pub const RESTORER_NAMES: [&str; 3] = ["average", "fusion", "external"];

impl Restorer {
    pub fn from_name(name: &str, fusion: FusionParams, external_model: Option<&Path>) -> Result<Self> {
        match name {
            "average" => Ok(Restorer::Average),
            "fusion" => {
                fusion.validate()?;
                Ok(Restorer::Fusion(fusion))
            }
            "external" => {
                let path = external_model.ok_or_else(|| {
                    Error::Config("restorer `external` needs an external_model path".into())
                })?;
                Ok(Restorer::External(ExternalRestorer::new(Box::new(CommandModel::new(path)?))))
            }
            other => Err(Error::Config(format!(
                "unknown restorer `{other}` (expected one of {})",
                RESTORER_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Restorer::Average => "average",
            Restorer::Fusion(_) => "fusion",
            Restorer::External(_) => "external",
        }
    }

    /// Whether frames may be restored concurrently with this restorer.
    pub fn is_parallel(&self) -> bool {
        !matches!(self, Restorer::External(_))
    }
}

/// Dispatches to the configured restorer; output samples are clamped to
/// `[0, 1]` and must match the centre frame's dimensions.
pub fn restore(restorer: &Restorer, input: &RestorationInput) -> Result<Frame> {
    let out = match restorer {
        Restorer::Average => fuse_average(input)?,
        Restorer::Fusion(p) => fuse_sharpness_weighted(input, p)?,
        Restorer::External(e) => e.restore(input)?,
    };
    if out.width() != input.center.width() || out.height() != input.center.height() {
        return Err(Error::Contract(format!(
            "restorer `{}` returned {}x{}, expected {}x{}",
            restorer.name(),
            out.width(),
            out.height(),
            input.center.width(),
            input.center.height()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(w: usize, h: usize, vals: Vec<f32>) -> Frame {
        Frame::new(w, h, 1, vals).unwrap()
    }

    fn input3(center: Frame, next: Frame, prev: Frame, dn: f64, dp: f64) -> RestorationInput {
        let (w, h) = (center.width(), center.height());
        let d = |v: f64| DistanceMap {
            width: w,
            height: h,
            values: vec![v; w * h],
        };
        let s = sharpness_from_distances(w, h, &[&d(dn), &d(dp)]).unwrap();
        RestorationInput::three(
            center,
            WarpedFrame::aligned(next),
            WarpedFrame::aligned(prev),
            d(dn),
            d(dp),
            s,
        )
    }

    #[test]
    fn average_of_three_values() {
        let i = input3(frame(1, 1, vec![0.3]), frame(1, 1, vec![0.0]), frame(1, 1, vec![0.6]), 0.0, 0.0);
        assert!((fuse_average(&i).unwrap().data()[0] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn identical_planes_return_centre() {
        let c = frame(3, 1, vec![0.1, 0.7, 0.9]);
        let i = input3(c.clone(), c.clone(), c.clone(), 0.0, 0.0);
        assert_eq!(fuse_average(&i).unwrap(), c);
    }

    #[test]
    fn fusion_reduces_to_average() {
        let i = input3(
            frame(2, 1, vec![0.3, 0.91]),
            frame(2, 1, vec![0.17, 0.5]),
            frame(2, 1, vec![0.6, 0.02]),
            0.0,
            0.0,
        );
        let f = fuse_sharpness_weighted(&i, &FusionParams::default()).unwrap();
        assert_eq!(f, fuse_average(&i).unwrap());
    }

    #[test]
    fn fusion_limits() {
        let c = frame(1, 1, vec![0.2]);
        let n = frame(1, 1, vec![0.8]);
        let p = frame(1, 1, vec![0.5]);
        let far = input3(c.clone(), n.clone(), p.clone(), f64::INFINITY, f64::INFINITY);
        assert_eq!(fuse_sharpness_weighted(&far, &FusionParams::default()).unwrap(), c);
        let half = input3(c, n, p, 0.0, f64::INFINITY);
        let out = fuse_sharpness_weighted(&half, &FusionParams::default()).unwrap();
        assert!((out.data()[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn invalid_taps_get_no_weight() {
        let mut i = input3(frame(2, 1, vec![0.2, 0.2]), frame(2, 1, vec![1.0, 1.0]), frame(2, 1, vec![0.2, 0.2]), 0.0, 0.0);
        i.neighbors[0].warped.validity[1] = false;
        let out = fuse_sharpness_weighted(&i, &FusionParams::default()).unwrap();
        assert!((out.data()[0] - 0.466_666_7).abs() < 1e-6);
        assert!((out.data()[1] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn restorer_dispatch() {
        let i = input3(
            frame(2, 1, vec![0.3, 0.4]),
            frame(2, 1, vec![0.35, 0.1]),
            frame(2, 1, vec![0.2, 0.45]),
            0.004,
            0.02,
        );
        let p = FusionParams { sigma_w: 0.2, kappa: 1.5 };
        let fusion = Restorer::from_name("fusion", p, None).unwrap();
        assert_eq!(restore(&fusion, &i).unwrap(), fuse_sharpness_weighted(&i, &p).unwrap());
        let avg = Restorer::from_name("average", p, None).unwrap();
        assert_eq!(restore(&avg, &i).unwrap(), fuse_average(&i).unwrap());
        assert!(matches!(
            Restorer::from_name("nonexistent", p, None),
            Err(Error::Config(_))
        ));
        assert!(matches!(Restorer::from_name("external", p, None), Err(Error::Config(_))));
        assert!(matches!(
            Restorer::from_name("external", p, Some(Path::new("/no/such/model"))),
            Err(Error::Backend(_))
        ));
        assert!(Restorer::from_name("fusion", FusionParams { sigma_w: 0.0, kappa: 1.0 }, None).is_err());
    }

    #[test]
    fn guidance_tensor_layout() {
        let c = Frame::new(2, 1, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let n = Frame::filled(2, 1, 3, 0.9).unwrap();
        let p = Frame::filled(2, 1, 3, 0.0).unwrap();
        let i = input3(c, n, p, 0.0, 2.0);
        let t = guidance_tensor(&i).unwrap();
        assert_eq!(t.shape(), [1, 10, 1, 2]);
        assert_eq!(&t.data[0..6], &[0.9; 6]);
        assert_eq!(&t.data[6..12], &[0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
        assert_eq!(&t.data[12..18], &[0.0; 6]);
        let s = (-1.0f64).exp() as f32;
        assert_eq!(&t.data[18..20], &[s, s]);
    }

    struct CentreModel;
    impl GuidanceModel for CentreModel {
        fn infer(&mut self, input: &Tensor) -> Result<Tensor> {
            // channels 3..6 hold the centre of an RGB three-frame input
            let plane = input.width * input.height;
            Ok(Tensor {
                channels: 3,
                height: input.height,
                width: input.width,
                data: input.data[3 * plane..6 * plane].to_vec(),
            })
        }
    }

    struct EchoModel;
    impl GuidanceModel for EchoModel {
        fn infer(&mut self, input: &Tensor) -> Result<Tensor> {
            Ok(input.clone())
        }
    }

    #[test]
    fn external_restorer_contract() {
        let c = Frame::new(2, 1, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let i = input3(c.clone(), c.clone(), c.clone(), 0.0, 0.0);
        let ok = Restorer::External(ExternalRestorer::new(Box::new(CentreModel)));
        assert_eq!(restore(&ok, &i).unwrap(), c);
        assert!(!ok.is_parallel());
        let bad = Restorer::External(ExternalRestorer::new(Box::new(EchoModel)));
        assert!(matches!(restore(&bad, &i), Err(Error::Contract(_))));
    }

    #[test]
    fn tensor_wire_format() {
        let t = Tensor { channels: 2, height: 1, width: 2, data: vec![0.5, 1.0, -2.0, 3.25] };
        let bytes = encode_tensor(&t);
        assert_eq!(&bytes[0..4], b"TNSR");
        assert_eq!(bytes.len(), 20 + 16);
        assert_eq!(decode_tensor(&bytes).unwrap(), t);
        assert!(matches!(decode_tensor(&bytes[..30]), Err(Error::Contract(_))));
        assert!(matches!(decode_tensor(b"nope"), Err(Error::Contract(_))));
    }

    #[cfg(unix)]
    #[test]
    fn command_model_round_trip() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        // `cat` echoes the 10-channel input, which violates the output contract
        let script = dir.path().join("echo.sh");
        std::fs::write(&script, "#!/bin/sh\nexec cat\n").unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let c = Frame::filled(3, 2, 3, 0.25).unwrap();
        let i = input3(c.clone(), c.clone(), c.clone(), 0.0, 0.0);
        let r = Restorer::from_name("external", FusionParams::default(), Some(&script)).unwrap();
        assert!(matches!(restore(&r, &i), Err(Error::Contract(_))));

        let failing = dir.path().join("fail.sh");
        std::fs::write(&failing, "#!/bin/sh\necho boom >&2\nexit 3\n").unwrap();
        std::fs::set_permissions(&failing, std::fs::Permissions::from_mode(0o755)).unwrap();
        let r = Restorer::from_name("external", FusionParams::default(), Some(&failing)).unwrap();
        match restore(&r, &i) {
            Err(Error::Backend(msg)) => assert!(msg.contains("boom")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn plane() -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec(0f32..=1.0, 8)
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

        #[test]
        fn fusion_is_convex_and_symmetric(
            c in plane(), n in plane(), p in plane(),
            dn in 0f64..1.0, dp in 0f64..1.0,
            sigma in 0.01f64..1.0, kappa in 0.1f64..4.0,
        ) {
            let params = FusionParams { sigma_w: sigma, kappa };
            let (c, n, p) = (frame(4, 2, c), frame(4, 2, n), frame(4, 2, p));
            let a = fuse_sharpness_weighted(&input3(c.clone(), n.clone(), p.clone(), dn, dp), &params).unwrap();
            let b = fuse_sharpness_weighted(&input3(c.clone(), p.clone(), n.clone(), dp, dn), &params).unwrap();
            prop_assert_eq!(&a, &b);
            for k in 0..8 {
                let vals = [c.data()[k], n.data()[k], p.data()[k]];
                let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                prop_assert!(a.data()[k] >= lo - 1e-6 && a.data()[k] <= hi + 1e-6);
            }
        }

        #[test]
        fn perfect_alignment_is_idempotent(c in plane(), sigma in 0.01f64..1.0, kappa in 0.1f64..4.0) {
            let c = frame(4, 2, c);
            let out = fuse_sharpness_weighted(
                &input3(c.clone(), c.clone(), c.clone(), 0.3, 0.1),
                &FusionParams { sigma_w: sigma, kappa },
            ).unwrap();
            for (a, b) in out.data().iter().zip(c.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn continuous_in_distance(c in plane(), n in plane(), p in plane(), d in 0f64..0.5) {
            let (c, n, p) = (frame(4, 2, c), frame(4, 2, n), frame(4, 2, p));
            let params = FusionParams::default();
            let a = fuse_sharpness_weighted(&input3(c.clone(), n.clone(), p.clone(), d, 0.0), &params).unwrap();
            let b = fuse_sharpness_weighted(&input3(c, n, p, d + 1e-9, 0.0), &params).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-5);
            }
        }
    }
}
