use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::ToString;

use crate::error::{Error, Result};

use super::{Raster, Scene, SubjectClass, Track, TrajectoryPoint};

/// Parse tab-separated annotation text: one `frame subject_id class_id x y`
/// record per line, in any order, with `x`/`y` in pixels of the given image.
/// Lines starting with `#` and blank lines are ignored.
pub fn parse_annotations(text: &str, image: Raster) -> Result<Scene> {
    let mut tracks: BTreeMap<u64, Track> = BTreeMap::new();
    let mut seen: BTreeSet<(u32, u64)> = BTreeSet::new();
    let (w, h) = (image.width() as f64, image.height() as f64);

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t').map(str::trim);
        let mut next = |what: &str| {
            fields
                .next()
                .filter(|f| !f.is_empty())
                .ok_or(Error::Parse {
                    line: lineno,
                    message: format!("missing field `{what}`"),
                })
        };
        let frame: u32 = parse_field(next("frame")?, "frame", lineno)?;
        let subject: u64 = parse_field(next("subject_id")?, "subject_id", lineno)?;
        let class: u16 = parse_field(next("class_id")?, "class_id", lineno)?;
        let x: f64 = parse_field(next("x")?, "x", lineno)?;
        let y: f64 = parse_field(next("y")?, "y", lineno)?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: "expected exactly 5 tab-separated fields".to_string(),
            });
        }

        if !seen.insert((frame, subject)) {
            return Err(Error::data(format!(
                "duplicate annotation for subject {subject} at frame {frame}"
            )));
        }
        if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
            return Err(Error::data(format!(
                "subject {subject} at frame {frame}: position ({x}, {y}) outside {w}x{h} image"
            )));
        }

        let track = tracks.entry(subject).or_insert_with(|| Track {
            class: SubjectClass(class),
            points: alloc::vec::Vec::new(),
        });
        if track.class != SubjectClass(class) {
            return Err(Error::data(format!(
                "subject {subject} annotated with conflicting classes"
            )));
        }
        track.points.push(TrajectoryPoint {
            frame,
            pos: [x / w, y / h],
        });
    }

    for track in tracks.values_mut() {
        track.points.sort_by_key(|p| p.frame);
    }
    Scene::new(image, 1, tracks)
}

fn parse_field<T: core::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid `{what}` value: `{field}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> Raster {
        Raster::filled(100, 50, 0.5)
    }

    #[test]
    fn two_lines_one_subject() {
        let scene = parse_annotations("0\t7\t0\t10\t20\n10\t7\t0\t30\t20\n", image()).unwrap();
        assert_eq!(scene.tracks.len(), 1);
        let track = &scene.tracks[&7];
        assert_eq!(track.points.len(), 2);
        assert_eq!(track.points[0].pos, [0.1, 0.4]);
    }

    #[test]
    fn empty_file_gives_empty_scene() {
        let scene = parse_annotations("", image()).unwrap();
        assert!(scene.tracks.is_empty());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let scene =
            parse_annotations("# header\n\n0\t1\t0\t5\t5\n", image()).unwrap();
        assert_eq!(scene.tracks.len(), 1);
    }

    #[test]
    fn out_of_order_frames_are_sorted() {
        let scene = parse_annotations("10\t1\t0\t5\t5\n0\t1\t0\t1\t1\n", image()).unwrap();
        let frames: alloc::vec::Vec<u32> =
            scene.tracks[&1].points.iter().map(|p| p.frame).collect();
        assert_eq!(frames, alloc::vec![0, 10]);
    }

    #[test]
    fn x_beyond_image_width_is_a_data_error() {
        let err = parse_annotations("0\t1\t0\t100.5\t5\n", image()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_annotations("0\t1\t0\t5\t5\n1\t1\tzero\t5\t5\n", image()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_frame_subject_is_a_data_error() {
        let err = parse_annotations("0\t1\t0\t5\t5\n0\t1\t0\t6\t6\n", image()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
