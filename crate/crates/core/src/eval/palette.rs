//! Class-id color palettes for prediction rendering.

use std::path::Path;

use crate::error::{Error, Result};

/// Official Cityscapes colors for the 19 evaluation classes, in train-id
/// order (transcribed from the public label table).
pub fn cityscapes_palette() -> Vec<[u8; 3]> {
    vec![
        [128, 64, 128],  // road
        [244, 35, 232],  // sidewalk
        [70, 70, 70],    // building
        [102, 102, 156], // wall
        [190, 153, 153], // fence
        [153, 153, 153], // pole
        [250, 170, 30],  // traffic light
        [220, 220, 0],   // traffic sign
        [107, 142, 35],  // vegetation
        [152, 251, 152], // terrain
        [70, 130, 180],  // sky
        [220, 20, 60],   // person
        [255, 0, 0],     // rider
        [0, 0, 142],     // car
        [0, 0, 70],      // truck
        [0, 60, 100],    // bus
        [0, 80, 100],    // train
        [0, 0, 230],     // motorcycle
        [119, 11, 32],   // bicycle
    ]
}

/// CARLA's exported colors for the 10 evaluation classes.
pub fn carla_palette() -> Vec<[u8; 3]> {
    vec![
        [70, 70, 70],    // Buildings
        [190, 153, 153], // Fences
        [220, 20, 60],   // Pedestrians
        [153, 153, 153], // Poles
        [128, 64, 128],  // Roads
        [244, 35, 232],  // Sidewalks
        [107, 142, 35],  // Vegetation
        [0, 0, 142],     // Vehicles
        [102, 102, 156], // Walls
        [220, 220, 0],   // Traffic Signs
    ]
}

/// Deterministic distinct colors for arbitrary class counts
/// (golden-angle hue walk).
pub fn generated_palette(k: usize) -> Vec<[u8; 3]> {
    (0..k)
        .map(|i| {
            if i == 0 {
                return [96, 96, 96];
            }
            let hue = (i as f64 * 137.50776405) % 360.0;
            hsv_to_rgb(hue, 0.75, 0.95)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Built-in palette for a named class map, padded/truncated to `k` entries.
pub fn palette_for(class_map_name: &str, k: usize) -> Vec<[u8; 3]> {
    let mut base = match class_map_name {
        "cityscapes" => cityscapes_palette(),
        "carla" | "cityscapes-to-carla" => carla_palette(),
        _ => generated_palette(k),
    };
    while base.len() < k {
        base.push(generated_palette(base.len() + 1)[base.len()]);
    }
    base.truncate(k);
    base
}

/// Load a palette file: one `class_id R G B` line per class, `#` comments.
pub fn load_palette(path: &Path, k: usize) -> Result<Vec<[u8; 3]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut palette = vec![[255u8, 0, 255]; k];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| -> Result<u8> {
            s.parse::<u8>().map_err(|_| {
                Error::Config(format!(
                    "{}:{}: bad palette value '{s}'",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        if parts.len() != 4 {
            return Err(Error::Config(format!(
                "{}:{}: palette lines are 'id R G B'",
                path.display(),
                lineno + 1
            )));
        }
        let id = parse(parts[0])? as usize;
        if id < k {
            palette[id] = [parse(parts[1])?, parse(parts[2])?, parse(parts[3])?];
        }
    }
    Ok(palette)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_palettes_match_class_counts() {
        assert_eq!(cityscapes_palette().len(), 19);
        assert_eq!(carla_palette().len(), 10);
        assert_eq!(palette_for("cityscapes", 19).len(), 19);
        assert_eq!(palette_for("identity", 6).len(), 6);
    }

    #[test]
    fn generated_colors_are_distinct() {
        let p = generated_palette(24);
        let set: std::collections::HashSet<[u8; 3]> = p.iter().copied().collect();
        assert_eq!(set.len(), 24);
    }

    #[test]
    fn palette_file_round_trip() {
        let dir = std::env::temp_dir().join("rdseg-palette-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.txt");
        std::fs::write(&path, "# comment\n0 10 20 30\n2 1 2 3\n").unwrap();
        let p = load_palette(&path, 3).unwrap();
        assert_eq!(p[0], [10, 20, 30]);
        assert_eq!(p[2], [1, 2, 3]);
    }
}
