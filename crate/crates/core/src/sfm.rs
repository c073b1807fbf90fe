//! Sparse reconstruction model and its text-table I/O.
//!
//! A reconstruction directory holds three whitespace-separated tables:
//!
//! * `cameras.txt`: `CAMERA_ID MODEL WIDTH HEIGHT PARAMS...` where `MODEL` is
//!   `PINHOLE` (`fx fy cx cy`) or `SIMPLE_PINHOLE` (`f cx cy`).
//! * `images.txt`: two lines per frame. The first is
//!   `IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME` (world-to-camera pose),
//!   the second lists `X Y POINT3D_ID` triples of 2D observations
//!   (`POINT3D_ID = -1` for untriangulated keypoints).
//! * `points3D.txt`: `POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)...`
//!   where `POINT2D_IDX` indexes the observation list of that image.
//!
//! Lines starting with `#` are comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

pub const CAMERAS_FILE: &str = "cameras.txt";
pub const IMAGES_FILE: &str = "images.txt";
pub const POINTS_FILE: &str = "points3D.txt";

/// Minimum depth in front of the camera for a projection to be defined.
pub const MIN_DEPTH: f64 = 1e-9;

const QUATERNION_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    Pinhole,
    SimplePinhole,
}

impl CameraModel {
    fn name(self) -> &'static str {
        match self {
            CameraModel::Pinhole => "PINHOLE",
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub camera_id: u64,
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    pub fn pinhole(camera_id: u64, width: u32, height: u32, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Camera {
            camera_id,
            model: CameraModel::Pinhole,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        }
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= f64::from(self.width)
            && pixel.y <= f64::from(self.height)
    }
}

/// A registered image: world-to-camera pose `x_cam = R x_world + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    pub camera_id: u64,
    /// Quaternion as stored on disk, `[w, x, y, z]`.
    pub qvec: [f64; 4],
    pub translation: Vector3<f64>,
    pub name: String,
}

impl Frame {
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.qvec;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * point + self.translation
    }

    pub fn to_world(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * (point - self.translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.to_world(&Vector3::zeros())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame_id: u64,
    pub pixel: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point3d {
    pub point_id: u64,
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub error: f64,
    pub track: Vec<Observation>,
}

/// Pinhole projection of a world point into a frame.
pub fn project(camera: &Camera, frame: &Frame, point: &Vector3<f64>) -> Result<Vector2<f64>> {
    let pc = frame.to_camera(point);
    project_camera_point(camera, &pc)
}

/// Pinhole projection of a point already expressed in camera coordinates.
pub fn project_camera_point(camera: &Camera, pc: &Vector3<f64>) -> Result<Vector2<f64>> {
    if pc.z <= MIN_DEPTH {
        return Err(Error::BehindCamera(pc.z));
    }
    Ok(Vector2::new(
        camera.fx * pc.x / pc.z + camera.cx,
        camera.fy * pc.y / pc.z + camera.cy,
    ))
}

/// Inverse of [`project`] at a known camera-frame depth.
pub fn back_project(camera: &Camera, frame: &Frame, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
    let pc = Vector3::new(
        (pixel.x - camera.cx) / camera.fx * depth,
        (pixel.y - camera.cy) / camera.fy * depth,
        depth,
    );
    frame.to_world(&pc)
}

#[derive(Debug, Clone)]
pub struct SfmReconstruction {
    cameras: Vec<Camera>,
    frames: Vec<Frame>,
    points: Vec<Point3d>,
    camera_index: HashMap<u64, usize>,
    frame_index: HashMap<u64, usize>,
}

impl PartialEq for SfmReconstruction {
    fn eq(&self, other: &Self) -> bool {
        self.cameras == other.cameras && self.frames == other.frames && self.points == other.points
    }
}

impl SfmReconstruction {
    /// Builds a reconstruction and checks every structural invariant.
    pub fn new(cameras: Vec<Camera>, frames: Vec<Frame>, points: Vec<Point3d>) -> Result<Self> {
        let mut camera_index = HashMap::with_capacity(cameras.len());
        for (i, cam) in cameras.iter().enumerate() {
            if camera_index.insert(cam.camera_id, i).is_some() {
                return Err(Error::integrity(format!("camera {}", cam.camera_id), "duplicate id"));
            }
            let finite = [cam.fx, cam.fy, cam.cx, cam.cy].iter().all(|v| v.is_finite());
            if !finite || cam.fx <= 0.0 || cam.fy <= 0.0 {
                return Err(Error::integrity(
                    format!("camera {}", cam.camera_id),
                    "focal lengths must be finite and positive",
                ));
            }
        }
        let mut frame_index = HashMap::with_capacity(frames.len());
        for (i, frame) in frames.iter().enumerate() {
            if frame_index.insert(frame.frame_id, i).is_some() {
                return Err(Error::integrity(format!("frame {}", frame.frame_id), "duplicate id"));
            }
            if !camera_index.contains_key(&frame.camera_id) {
                return Err(Error::integrity(
                    format!("frame {}", frame.frame_id),
                    format!("unknown camera {}", frame.camera_id),
                ));
            }
            let norm = frame.qvec.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > QUATERNION_NORM_TOL {
                return Err(Error::integrity(
                    format!("frame {}", frame.frame_id),
                    format!("quaternion norm {norm} is not 1"),
                ));
            }
        }
        for point in &points {
            let what = || format!("point {}", point.point_id);
            if point.track.len() < 2 {
                return Err(Error::integrity(what(), "track shorter than 2"));
            }
            for obs in &point.track {
                let Some(&fi) = frame_index.get(&obs.frame_id) else {
                    return Err(Error::integrity(what(), format!("unknown frame {}", obs.frame_id)));
                };
                let cam = &cameras[camera_index[&frames[fi].camera_id]];
                if !cam.contains(&obs.pixel) {
                    return Err(Error::integrity(
                        what(),
                        format!("observation {:?} outside frame {}", obs.pixel, obs.frame_id),
                    ));
                }
            }
        }
        Ok(SfmReconstruction {
            cameras,
            frames,
            points,
            camera_index,
            frame_index,
        })
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn points(&self) -> &[Point3d] {
        &self.points
    }

    pub fn frame(&self, frame_id: u64) -> Option<&Frame> {
        self.frame_index.get(&frame_id).map(|&i| &self.frames[i])
    }

    pub fn camera(&self, camera_id: u64) -> Option<&Camera> {
        self.camera_index.get(&camera_id).map(|&i| &self.cameras[i])
    }

    /// Camera of a frame. Always present for frames of a validated reconstruction.
    pub fn camera_of(&self, frame: &Frame) -> &Camera {
        &self.cameras[self.camera_index[&frame.camera_id]]
    }

    pub fn project(&self, frame_id: u64, point: &Vector3<f64>) -> Result<Vector2<f64>> {
        let frame = self.frame(frame_id).ok_or(Error::MissingFrame(frame_id))?;
        project(self.camera_of(frame), frame, point)
    }
}

fn read_table(dir: &Path, name: &str) -> Result<(std::path::PathBuf, String)> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::parse(&path, "file not found")
        } else {
            Error::io(&path, e)
        }
    })?;
    Ok((path, text))
}

fn field<T: std::str::FromStr>(path: &Path, lineno: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(path, format!("line {lineno}: missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(path, format!("line {lineno}: bad {what} `{tok}`")))
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

fn parse_cameras(path: &Path, text: &str) -> Result<Vec<Camera>> {
    let mut cameras = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let lineno = i + 1;
        let mut toks = line.split_whitespace();
        let camera_id = field(path, lineno, toks.next(), "CAMERA_ID")?;
        let model_name: String = field(path, lineno, toks.next(), "MODEL")?;
        let model = match model_name.as_str() {
            "PINHOLE" => CameraModel::Pinhole,
            "SIMPLE_PINHOLE" => CameraModel::SimplePinhole,
            _ => return Err(Error::UnsupportedCamera(model_name)),
        };
        let width = field(path, lineno, toks.next(), "WIDTH")?;
        let height = field(path, lineno, toks.next(), "HEIGHT")?;
        let params: Vec<f64> = toks
            .map(|t| field(path, lineno, Some(t), "PARAM"))
            .collect::<Result<_>>()?;
        let (fx, fy, cx, cy) = match (model, params.as_slice()) {
            (CameraModel::Pinhole, &[fx, fy, cx, cy]) => (fx, fy, cx, cy),
            (CameraModel::SimplePinhole, &[f, cx, cy]) => (f, f, cx, cy),
            _ => {
                return Err(Error::parse(
                    path,
                    format!("line {lineno}: wrong parameter count {} for {model_name}", params.len()),
                ))
            }
        };
        cameras.push(Camera {
            camera_id,
            model,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        });
    }
    Ok(cameras)
}

type ImageObservations = HashMap<u64, Vec<(Vector2<f64>, i64)>>;

fn parse_images(path: &Path, text: &str) -> Result<(Vec<Frame>, ImageObservations)> {
    let mut frames = Vec::new();
    let mut observations = HashMap::new();
    let mut lines = text.lines().enumerate();
    while let Some((i, line)) = lines.next() {
        if is_skippable(line) {
            continue;
        }
        let lineno = i + 1;
        let mut toks = line.split_whitespace();
        let frame_id: u64 = field(path, lineno, toks.next(), "IMAGE_ID")?;
        let mut qvec = [0.0; 4];
        for (q, name) in qvec.iter_mut().zip(["QW", "QX", "QY", "QZ"]) {
            *q = field(path, lineno, toks.next(), name)?;
        }
        let tx = field(path, lineno, toks.next(), "TX")?;
        let ty = field(path, lineno, toks.next(), "TY")?;
        let tz = field(path, lineno, toks.next(), "TZ")?;
        let camera_id = field(path, lineno, toks.next(), "CAMERA_ID")?;
        let name: String = field(path, lineno, toks.next(), "NAME")?;

        let mut obs = Vec::new();
        if let Some((j, pts_line)) = lines.next() {
            let toks: Vec<&str> = pts_line.split_whitespace().collect();
            if !toks.len().is_multiple_of(3) {
                return Err(Error::parse(path, format!("line {}: POINTS2D not in triples", j + 1)));
            }
            for t in toks.chunks_exact(3) {
                let x = field(path, j + 1, Some(t[0]), "X")?;
                let y = field(path, j + 1, Some(t[1]), "Y")?;
                let pid: i64 = field(path, j + 1, Some(t[2]), "POINT3D_ID")?;
                obs.push((Vector2::new(x, y), pid));
            }
        }
        observations.insert(frame_id, obs);
        frames.push(Frame {
            frame_id,
            camera_id,
            qvec,
            translation: Vector3::new(tx, ty, tz),
            name,
        });
    }
    Ok((frames, observations))
}

fn parse_points(path: &Path, text: &str, observations: &ImageObservations) -> Result<Vec<Point3d>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 8 || !(toks.len() - 8).is_multiple_of(2) {
            return Err(Error::parse(path, format!("line {lineno}: malformed point record")));
        }
        let point_id: u64 = field(path, lineno, Some(toks[0]), "POINT3D_ID")?;
        let x = field(path, lineno, Some(toks[1]), "X")?;
        let y = field(path, lineno, Some(toks[2]), "Y")?;
        let z = field(path, lineno, Some(toks[3]), "Z")?;
        let color = [
            field(path, lineno, Some(toks[4]), "R")?,
            field(path, lineno, Some(toks[5]), "G")?,
            field(path, lineno, Some(toks[6]), "B")?,
        ];
        let error = field(path, lineno, Some(toks[7]), "ERROR")?;
        let mut track = Vec::with_capacity((toks.len() - 8) / 2);
        for pair in toks[8..].chunks_exact(2) {
            let frame_id: u64 = field(path, lineno, Some(pair[0]), "IMAGE_ID")?;
            let idx: usize = field(path, lineno, Some(pair[1]), "POINT2D_IDX")?;
            let what = || format!("point {point_id}");
            let obs = observations
                .get(&frame_id)
                .ok_or_else(|| Error::integrity(what(), format!("unknown frame {frame_id}")))?;
            let &(pixel, pid) = obs.get(idx).ok_or_else(|| {
                Error::integrity(what(), format!("observation {idx} missing in frame {frame_id}"))
            })?;
            if pid != point_id as i64 {
                return Err(Error::integrity(
                    what(),
                    format!("frame {frame_id} observation {idx} belongs to point {pid}"),
                ));
            }
            track.push(Observation { frame_id, pixel });
        }
        points.push(Point3d {
            point_id,
            position: Vector3::new(x, y, z),
            color,
            error,
            track,
        });
    }
    Ok(points)
}

/// Reads a reconstruction directory (`cameras.txt`, `images.txt`, `points3D.txt`).
pub fn parse_sfm(dir: impl AsRef<Path>) -> Result<SfmReconstruction> {
    let dir = dir.as_ref();
    let (cam_path, cam_text) = read_table(dir, CAMERAS_FILE)?;
    let (img_path, img_text) = read_table(dir, IMAGES_FILE)?;
    let (pts_path, pts_text) = read_table(dir, POINTS_FILE)?;
    let cameras = parse_cameras(&cam_path, &cam_text)?;
    let (frames, observations) = parse_images(&img_path, &img_text)?;
    let points = parse_points(&pts_path, &pts_text, &observations)?;
    SfmReconstruction::new(cameras, frames, points)
}

/// Writes the three tables into `dir`, creating it if needed.
pub fn write_sfm(recon: &SfmReconstruction, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut cams = String::from("# CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]\n");
    for c in &recon.cameras {
        let _ = write!(cams, "{} {} {} {}", c.camera_id, c.model.name(), c.width, c.height);
        match c.model {
            CameraModel::Pinhole => {
                let _ = writeln!(cams, " {} {} {} {}", c.fx, c.fy, c.cx, c.cy);
            }
            CameraModel::SimplePinhole => {
                let _ = writeln!(cams, " {} {} {}", c.fx, c.cx, c.cy);
            }
        }
    }

    // Observation lists per frame, in point order, and each track entry's index.
    let mut per_frame: HashMap<u64, Vec<(Vector2<f64>, u64)>> = HashMap::new();
    let mut track_refs: Vec<Vec<(u64, usize)>> = Vec::with_capacity(recon.points.len());
    for p in &recon.points {
        let refs = p
            .track
            .iter()
            .map(|o| {
                let list = per_frame.entry(o.frame_id).or_default();
                list.push((o.pixel, p.point_id));
                (o.frame_id, list.len() - 1)
            })
            .collect();
        track_refs.push(refs);
    }

    let mut imgs = String::from(
        "# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n# POINTS2D[] as (X Y POINT3D_ID)\n",
    );
    for f in &recon.frames {
        let [qw, qx, qy, qz] = f.qvec;
        let t = &f.translation;
        let _ = writeln!(
            imgs,
            "{} {qw} {qx} {qy} {qz} {} {} {} {} {}",
            f.frame_id, t.x, t.y, t.z, f.camera_id, f.name
        );
        let line = per_frame
            .get(&f.frame_id)
            .map(|obs| {
                obs.iter()
                    .map(|(px, pid)| format!("{} {} {pid}", px.x, px.y))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        imgs.push_str(&line);
        imgs.push('\n');
    }

    let mut pts = String::from("# POINT3D_ID X Y Z R G B ERROR TRACK[] as (IMAGE_ID POINT2D_IDX)\n");
    for (p, refs) in recon.points.iter().zip(&track_refs) {
        let [r, g, b] = p.color;
        let _ = write!(
            pts,
            "{} {} {} {} {r} {g} {b} {}",
            p.point_id, p.position.x, p.position.y, p.position.z, p.error
        );
        for (fid, idx) in refs {
            let _ = write!(pts, " {fid} {idx}");
        }
        pts.push('\n');
    }

    for (name, body) in [(CAMERAS_FILE, cams), (IMAGES_FILE, imgs), (POINTS_FILE, pts)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tables(dir: &Path, cameras: &str, images: &str, points: &str) {
        fs::write(dir.join(CAMERAS_FILE), cameras).unwrap();
        fs::write(dir.join(IMAGES_FILE), images).unwrap();
        fs::write(dir.join(POINTS_FILE), points).unwrap();
    }

    const CAMERAS: &str = "# comment\n1 PINHOLE 100 80 100 100 50 40\n";
    const IMAGES: &str = "\
1 1 0 0 0 0 0 0 1 a.png
10 20 7
2 1 0 0 0 -0.5 0 0 1 b.png
5 5 -1 30 20 7
";

    #[test]
    fn minimal_reconstruction() {
        let dir = tempfile::tempdir().unwrap();
        write_tables(dir.path(), CAMERAS, IMAGES, "7 0 0 2 255 0 0 0.5 1 0 2 1\n");
        let recon = parse_sfm(dir.path()).unwrap();
        assert_eq!(recon.cameras().len(), 1);
        assert_eq!(recon.frames().len(), 2);
        let p = &recon.points()[0];
        assert_eq!(p.track.len(), 2);
        assert_eq!(p.track[1].frame_id, 2);
        assert_eq!(p.track[1].pixel, Vector2::new(30.0, 20.0));
    }

    #[test]
    fn dangling_frame_reference() {
        let dir = tempfile::tempdir().unwrap();
        write_tables(dir.path(), CAMERAS, IMAGES, "7 0 0 2 255 0 0 0.5 1 0 99 0\n");
        match parse_sfm(dir.path()) {
            Err(Error::Integrity { what, .. }) => assert_eq!(what, "point 7"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn missing_table() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(CAMERAS_FILE), CAMERAS).unwrap();
        match parse_sfm(dir.path()) {
            Err(Error::Parse { file, .. }) => assert!(file.ends_with(IMAGES_FILE)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_distorted_camera() {
        let dir = tempfile::tempdir().unwrap();
        write_tables(dir.path(), "1 OPENCV 100 80 100 100 50 40 0 0 0 0\n", IMAGES, "");
        assert!(matches!(parse_sfm(dir.path()), Err(Error::UnsupportedCamera(m)) if m == "OPENCV"));
    }

    #[test]
    fn short_track_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let images = "1 1 0 0 0 0 0 0 1 a.png\n10 20 7\n";
        write_tables(dir.path(), CAMERAS, images, "7 0 0 2 255 0 0 0.5 1 0\n");
        assert!(matches!(parse_sfm(dir.path()), Err(Error::Integrity { .. })));
    }

    #[test]
    fn simple_pinhole_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_tables(
            dir.path(),
            "3 SIMPLE_PINHOLE 100 80 90 50 40\n",
            "1 1 0 0 0 0 0 0 3 a.png\n10 20 7\n2 1 0 0 0 0.1 0 0 3 b.png\n11 21 7\n",
            "7 0.1 0.2 2.5 1 2 3 0.25 1 0 2 0\n",
        );
        let recon = parse_sfm(dir.path()).unwrap();
        assert_eq!(recon.cameras()[0].fx, 90.0);
        assert_eq!(recon.cameras()[0].fy, 90.0);
        let out = tempfile::tempdir().unwrap();
        write_sfm(&recon, out.path()).unwrap();
        assert_eq!(parse_sfm(out.path()).unwrap(), recon);
    }

    fn identity_frame() -> Frame {
        Frame {
            frame_id: 1,
            camera_id: 1,
            qvec: [1.0, 0.0, 0.0, 0.0],
            translation: Vector3::zeros(),
            name: "f".into(),
        }
    }

    #[test]
    fn projection_examples() {
        let cam = Camera::pinhole(1, 100, 100, 100.0, 100.0, 50.0, 50.0);
        let frame = identity_frame();
        assert_eq!(project(&cam, &frame, &Vector3::new(0.0, 0.0, 2.0)).unwrap(), Vector2::new(50.0, 50.0));
        assert_eq!(project(&cam, &frame, &Vector3::new(1.0, 0.0, 2.0)).unwrap(), Vector2::new(100.0, 50.0));
        assert!(matches!(
            project(&cam, &frame, &Vector3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn back_projection_inverts_projection() {
        let cam = Camera::pinhole(1, 640, 480, 420.0, 410.0, 320.0, 240.0);
        let q = UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1);
        let frame = Frame {
            qvec: [q.w, q.i, q.j, q.k],
            translation: Vector3::new(0.2, -0.4, 3.0),
            ..identity_frame()
        };
        for p in [Vector3::new(0.1, 0.2, 0.3), Vector3::new(-0.5, 0.4, 1.0), Vector3::new(0.0, 0.0, 0.0)] {
            let depth = frame.to_camera(&p).z;
            let px = project(&cam, &frame, &p).unwrap();
            let back = back_project(&cam, &frame, &px, depth);
            assert!((back - p).norm() < 1e-9, "{back} vs {p}");
        }
    }
}
