//! URDF text export using cylinder primitives.

use std::fmt::Write;

use super::model::RobotModel;
use super::template::{KinematicTemplate, TemplateFile};
use crate::error::{Error, Result};
use crate::linalg::Mat3;
use crate::se3::Pose;

const TEMPLATE_MARKER: &str = "xmopkit-template:";

/// Roll, pitch, yaw with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rotation_to_rpy(r: &Mat3<f64>) -> [f64; 3] {
    let m = &r.0;
    let pitch = (-m[2][0]).atan2((m[0][0] * m[0][0] + m[1][0] * m[1][0]).sqrt());
    let roll = m[2][1].atan2(m[2][2]);
    let yaw = m[1][0].atan2(m[0][0]);
    [roll, pitch, yaw]
}

fn origin(p: &Pose<f64>) -> String {
    let t = p.translation;
    let [r, pi, y] = rotation_to_rpy(&p.rotation);
    format!("<origin xyz=\"{} {} {}\" rpy=\"{} {} {}\"/>", t[0], t[1], t[2], r, pi, y)
}

fn link_name(i: usize, n: usize) -> String {
    match i {
        0 => "base_link".to_string(),
        i if i + 1 == n => "ee_link".to_string(),
        i => format!("link_{i}"),
    }
}

/// Emits one `<link>` per rigid body with a visual and collision cylinder for
/// each constituent cylinder, and one revolute `<joint>` per joint. When a
/// template is supplied its native JSON is embedded in a comment so the file
/// can be re-imported with [`import_template_from_urdf`].
pub fn export_urdf(robot: &RobotModel<f64>, template: Option<&TemplateFile>, name: &str) -> Result<String> {
    let mut out = String::new();
    let n = robot.links.len();
    let w = |e: std::fmt::Error| Error::InvalidArgument(e.to_string());
    writeln!(out, "<?xml version=\"1.0\"?>").map_err(w)?;
    if let Some(t) = template {
        let json = serde_json::to_string(t)?;
        writeln!(out, "<!-- {TEMPLATE_MARKER} {json} -->").map_err(w)?;
    }
    writeln!(out, "<robot name=\"{name}\">").map_err(w)?;
    for (i, link) in robot.links.iter().enumerate() {
        writeln!(out, "  <link name=\"{}\">", link_name(i, n)).map_err(w)?;
        for c in &link.cylinders {
            let geom = format!("<geometry><cylinder radius=\"{}\" length=\"{}\"/></geometry>", c.radius, c.length);
            let o = origin(&c.frame);
            writeln!(out, "    <visual>{o}{geom}</visual>").map_err(w)?;
            writeln!(out, "    <collision>{o}{geom}</collision>").map_err(w)?;
        }
        writeln!(out, "  </link>").map_err(w)?;
    }
    for (j, axis) in robot.joint_axes.iter().enumerate() {
        let parent = &robot.links[j];
        let (lo, hi) = robot.joint_limits[j];
        let t = parent.tip;
        writeln!(out, "  <joint name=\"joint_{}\" type=\"revolute\">", j + 1).map_err(w)?;
        writeln!(out, "    <parent link=\"{}\"/>", link_name(j, n)).map_err(w)?;
        writeln!(out, "    <child link=\"{}\"/>", link_name(j + 1, n)).map_err(w)?;
        writeln!(out, "    <origin xyz=\"{} {} {}\" rpy=\"0 0 0\"/>", t[0], t[1], t[2]).map_err(w)?;
        writeln!(out, "    <axis xyz=\"{} {} {}\"/>", axis[0], axis[1], axis[2]).map_err(w)?;
        writeln!(out, "    <limit lower=\"{lo}\" upper=\"{hi}\" effort=\"100\" velocity=\"1\"/>").map_err(w)?;
        writeln!(out, "  </joint>").map_err(w)?;
    }
    writeln!(out, "</robot>").map_err(w)?;
    Ok(out)
}

/// Recovers the template embedded by [`export_urdf`].
pub fn import_template_from_urdf(urdf: &str) -> Result<KinematicTemplate> {
    let start = urdf
        .find(TEMPLATE_MARKER)
        .ok_or_else(|| Error::InvalidArgument("URDF carries no embedded template".into()))?;
    let rest = &urdf[start + TEMPLATE_MARKER.len()..];
    let end = rest.find("-->").ok_or_else(|| Error::InvalidArgument("unterminated template comment".into()))?;
    TemplateFile::from_json(rest[..end].trim())?.template()
}
