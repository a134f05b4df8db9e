//! Class-id remapping between label conventions.

use crate::error::{Error, Result};
use crate::labels::{Labels, IGNORE_ID};

/// Total mapping from raw source ids to contiguous evaluation ids.
///
/// Ids outside the declared sources, and sources mapped to ignore, become
/// the ignore id (255).
pub struct ClassMap {
    pub name: String,
    pub source_classes: Vec<(u8, String)>,
    target_names: Vec<String>,
    table: [u8; 256],
}

impl ClassMap {
    pub fn new(
        name: &str,
        source_classes: Vec<(u8, String)>,
        target_names: Vec<String>,
        pairs: &[(u8, u8)],
    ) -> Result<Self> {
        let mut table = [IGNORE_ID; 256];
        let k = target_names.len();
        for &(src, dst) in pairs {
            if dst != IGNORE_ID && dst as usize >= k {
                return Err(Error::Config(format!(
                    "class map {name}: target id {dst} outside [0,{k})"
                )));
            }
            table[src as usize] = dst;
        }
        Ok(ClassMap { name: name.to_string(), source_classes, target_names, table })
    }

    /// Pass-through map for data already carrying train ids `[0,K)`.
    pub fn identity(k: usize, name: &str) -> Result<Self> {
        if k == 0 || k > 255 {
            return Err(Error::Config(format!("identity map wants 1..=255 classes, got {k}")));
        }
        let names: Vec<String> = (0..k).map(|i| format!("class{i}")).collect();
        let sources: Vec<(u8, String)> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (i as u8, n.clone()))
            .collect();
        let pairs: Vec<(u8, u8)> = (0..k as u8).map(|i| (i, i)).collect();
        ClassMap::new(name, sources, names, &pairs)
    }

    pub fn num_classes(&self) -> usize {
        self.target_names.len()
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn apply(&self, raw: u8) -> u8 {
        if raw == IGNORE_ID {
            IGNORE_ID
        } else {
            self.table[raw as usize]
        }
    }

    pub fn apply_labels(&self, labels: &Labels) -> Labels {
        Labels {
            n: labels.n,
            h: labels.h,
            w: labels.w,
            ids: labels.ids.iter().map(|&id| self.apply(id)).collect(),
        }
    }

    /// Look up a named preset; `identity` uses `num_classes` for its width.
    pub fn by_name(name: &str, num_classes: usize) -> Result<ClassMap> {
        match name {
            "identity" => ClassMap::identity(num_classes, "identity"),
            "cityscapes" => Ok(cityscapes_class_map()),
            "carla" => Ok(carla_class_map()),
            "cityscapes-to-carla" => Ok(cityscapes_to_carla_map()),
            other => Err(Error::Config(format!(
                "unknown class map '{other}' (want identity, cityscapes, carla, cityscapes-to-carla)"
            ))),
        }
    }
}

/// The 19 Cityscapes evaluation classes, from the official 34 raw label ids.
pub fn cityscapes_class_map() -> ClassMap {
    const RAW: [&str; 34] = [
        "unlabeled", "ego vehicle", "rectification border", "out of roi", "static", "dynamic",
        "ground", "road", "sidewalk", "parking", "rail track", "building", "wall", "fence",
        "guard rail", "bridge", "tunnel", "pole", "polegroup", "traffic light", "traffic sign",
        "vegetation", "terrain", "sky", "person", "rider", "car", "truck", "bus", "caravan",
        "trailer", "train", "motorcycle", "bicycle",
    ];
    let sources = RAW.iter().enumerate().map(|(i, n)| (i as u8, n.to_string())).collect();
    let targets = cityscapes_train_names().iter().map(|s| s.to_string()).collect();
    let pairs = [
        (7u8, 0u8), // road
        (8, 1),     // sidewalk
        (11, 2),    // building
        (12, 3),    // wall
        (13, 4),    // fence
        (17, 5),    // pole
        (19, 6),    // traffic light
        (20, 7),    // traffic sign
        (21, 8),    // vegetation
        (22, 9),    // terrain
        (23, 10),   // sky
        (24, 11),   // person
        (25, 12),   // rider
        (26, 13),   // car
        (27, 14),   // truck
        (28, 15),   // bus
        (31, 16),   // train
        (32, 17),   // motorcycle
        (33, 18),   // bicycle
    ];
    ClassMap::new("cityscapes", sources, targets, &pairs).expect("static map is valid")
}

pub fn cityscapes_train_names() -> [&'static str; 19] {
    [
        "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light", "traffic sign",
        "vegetation", "terrain", "sky", "person", "rider", "car", "truck", "bus", "train",
        "motorcycle", "bicycle",
    ]
}

pub fn carla_eval_names() -> [&'static str; 10] {
    [
        "Buildings", "Fences", "Pedestrians", "Poles", "Roads", "Sidewalks", "Vegetation",
        "Vehicles", "Walls", "Traffic Signs",
    ]
}

/// CARLA's exported semantic ids down to 10 evaluation classes: road line and
/// the unlabeled/other ids are ignored because they have no Cityscapes
/// counterpart.
pub fn carla_class_map() -> ClassMap {
    const RAW: [&str; 13] = [
        "unlabeled", "buildings", "fences", "other", "pedestrians", "poles", "road line",
        "roads", "sidewalks", "vegetation", "vehicles", "walls", "traffic signs",
    ];
    let sources = RAW.iter().enumerate().map(|(i, n)| (i as u8, n.to_string())).collect();
    let targets = carla_eval_names().iter().map(|s| s.to_string()).collect();
    let pairs = [
        // 0 unlabeled, 3 other, 6 road line -> ignored
        (1u8, 0u8), // buildings
        (2, 1),     // fences
        (4, 2),     // pedestrians
        (5, 3),     // poles
        (7, 4),     // roads
        (8, 5),     // sidewalks
        (9, 6),     // vegetation
        (10, 7),    // vehicles
        (11, 8),    // walls
        (12, 9),    // traffic signs
    ];
    ClassMap::new("carla", sources, targets, &pairs).expect("static map is valid")
}

/// Evaluate Cityscapes-trained predictions against CARLA ground truth:
/// car, truck and bus collapse into vehicles; Cityscapes classes absent from
/// CARLA are ignored.
pub fn cityscapes_to_carla_map() -> ClassMap {
    let sources = cityscapes_train_names()
        .iter()
        .enumerate()
        .map(|(i, n)| (i as u8, n.to_string()))
        .collect();
    let targets = carla_eval_names().iter().map(|s| s.to_string()).collect();
    let pairs = [
        (0u8, 4u8), // road -> Roads
        (1, 5),     // sidewalk -> Sidewalks
        (2, 0),     // building -> Buildings
        (3, 8),     // wall -> Walls
        (4, 1),     // fence -> Fences
        (5, 3),     // pole -> Poles
        (7, 9),     // traffic sign -> Traffic Signs
        (8, 6),     // vegetation -> Vegetation
        (11, 2),    // person -> Pedestrians
        (13, 7),    // car -> Vehicles
        (14, 7),    // truck -> Vehicles
        (15, 7),    // bus -> Vehicles
                    // traffic light, terrain, sky, rider, train, motorcycle,
                    // bicycle have no CARLA class -> ignored
    ];
    ClassMap::new("cityscapes-to-carla", sources, targets, &pairs).expect("static map is valid")
}
