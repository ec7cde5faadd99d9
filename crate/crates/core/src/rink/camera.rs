use serde::{Deserialize, Serialize};

use super::{CameraParams, KartState, Vec2};

/// Screen space all labels live in.
pub const SCREEN_WIDTH: f64 = 400.0;
pub const SCREEN_HEIGHT: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    OnScreen { x: f64, y: f64, depth: f64 },
    OffScreen,
}

impl Projection {
    pub fn on_screen(&self) -> Option<[f64; 2]> {
        match *self {
            Projection::OnScreen { x, y, .. } => Some([x, y]),
            Projection::OffScreen => None,
        }
    }
}

/// Pinhole camera riding a kart, pitched down toward the ice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub origin: [f64; 3],
    pub forward: [f64; 3],
    pub right: [f64; 3],
    pub up: [f64; 3],
    /// Focal length in 400-px screen units.
    pub focal: f64,
    pub near: f64,
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Camera {
    pub fn new(position: Vec2, heading: f64, fov: f64, params: &CameraParams) -> Self {
        let (sh, ch) = heading.sin_cos();
        let (sp, cp) = params.pitch_deg.to_radians().sin_cos();
        Self {
            origin: [position[0], position[1], params.height],
            forward: [cp * ch, cp * sh, -sp],
            right: [sh, -ch, 0.0],
            up: [sp * ch, sp * sh, cp],
            focal: (SCREEN_WIDTH / 2.0) / (fov / 2.0).tan(),
            near: params.near,
        }
    }

    pub fn for_kart(kart: &KartState, params: &CameraParams) -> Self {
        Self::new(kart.position, kart.heading, kart.character.fov, params)
    }

    /// Camera-space coordinates (right, up, depth) of a world point.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]];
        [dot3(d, self.right), dot3(d, self.up), dot3(d, self.forward)]
    }

    /// Screen position ignoring the frame bounds; `None` behind the near plane.
    pub fn project_unbounded(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let [x, y, z] = self.to_camera(p);
        if z <= self.near {
            return None;
        }
        Some([
            SCREEN_WIDTH / 2.0 + self.focal * x / z,
            SCREEN_HEIGHT / 2.0 - self.focal * y / z,
            z,
        ])
    }

    pub fn to_image(&self, p: [f64; 3]) -> Projection {
        match self.project_unbounded(p) {
            Some([x, y, depth]) if (0.0..=SCREEN_WIDTH).contains(&x) && (0.0..=SCREEN_HEIGHT).contains(&y) => {
                Projection::OnScreen { x, y, depth }
            }
            _ => Projection::OffScreen,
        }
    }

    /// Unnormalized ray direction through a screen point; its forward component is 1.
    pub fn ray(&self, sx: f64, sy: f64) -> [f64; 3] {
        let a = (sx - SCREEN_WIDTH / 2.0) / self.focal;
        let b = (SCREEN_HEIGHT / 2.0 - sy) / self.focal;
        std::array::from_fn(|i| self.forward[i] + a * self.right[i] + b * self.up[i])
    }

    /// Intersects the ray through a screen point with the plane `z = height`.
    pub fn back_project(&self, sx: f64, sy: f64, height: f64) -> Option<Vec2> {
        let d = self.ray(sx, sy);
        let t = (height - self.origin[2]) / d[2];
        if d[2] >= 0.0 || !t.is_finite() || t <= 0.0 {
            return None;
        }
        Some([self.origin[0] + t * d[0], self.origin[1] + t * d[1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(heading: f64) -> Camera {
        Camera::new([3.0, -4.0], heading, 90f64.to_radians(), &CameraParams::default())
    }

    #[test]
    fn axial_point_lands_on_center_column() {
        let c = cam(0.0);
        let p = c.to_image([13.0, -4.0, 0.75]);
        let Projection::OnScreen { x, .. } = p else { panic!("{p:?}") };
        assert_eq!(x, 200.0);
        let far = c.to_image([1e6, -4.0, 2.5]).on_screen().unwrap();
        let horizon = 150.0 - c.focal * 12f64.to_radians().tan();
        assert_eq!(far[0], 200.0);
        assert!((far[1] - horizon).abs() < 1e-3);
    }

    #[test]
    fn points_behind_are_off_screen() {
        let c = cam(1.0);
        let behind = [3.0 - 5.0 * 1f64.cos(), -4.0 - 5.0 * 1f64.sin(), 0.0];
        assert_eq!(c.to_image(behind), Projection::OffScreen);
    }

    #[test]
    fn mirror_pair_is_symmetric_about_center() {
        for h in [0.0, 0.7, -2.1, 3.0] {
            let c = cam(h);
            let (s, co) = f64::sin_cos(h);
            let ahead = [3.0 + 10.0 * co, -4.0 + 10.0 * s];
            let left = [ahead[0] - s, ahead[1] + co, 0.75];
            let right = [ahead[0] + s, ahead[1] - co, 0.75];
            let l = c.to_image(left).on_screen().unwrap();
            let r = c.to_image(right).on_screen().unwrap();
            assert!((l[0] + r[0] - 400.0).abs() < 1e-9, "heading {h}");
            assert!(l[0] < 200.0);
            assert!((l[1] - r[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn back_projection_inverts_projection_on_a_plane() {
        let c = cam(0.4);
        let p = [12.0, 2.0, 0.75];
        let [x, y] = c.to_image(p).on_screen().unwrap();
        let q = c.back_project(x, y, 0.75).unwrap();
        assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
        assert!(c.back_project(200.0, 0.0, 0.75).is_none());
    }
}
