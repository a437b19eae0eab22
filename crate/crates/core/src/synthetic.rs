//! The four-camera synthetic benchmark (two-, three- and four-view instances with all
//! images at the principal point, plus a three-view instance where fractional-programming
//! solvers are known to return a suboptimal point) and its reference solutions.

use crate::problem::{CameraMatrix, ScenePoint, TriangulationProblem};

const P: [[[f64; 4]; 3]; 4] = [
    [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]],
    [[-1.0, -1.0, -1.0, 0.0], [1.0, 0.0, -1.0, 1.0], [0.0, 0.0, 1.0, 1.0]],
    [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 1.0], [-1.0, -1.0, 0.0, 1.0]],
    [[0.0, -1.0, -1.0, 0.0], [0.0, 1.0, -1.0, 1.0], [1.0, 0.0, 1.0, 1.0]],
];

/// Cameras `P1..P4`.
pub fn cameras() -> Vec<CameraMatrix> {
    P.iter()
        .enumerate()
        .map(|(i, rows)| CameraMatrix::from_rows(format!("P{}", i + 1), *rows).expect("valid camera"))
        .collect()
}

fn at_origin(n: usize) -> TriangulationProblem {
    let cams: Vec<_> = cameras().into_iter().take(n).collect();
    TriangulationProblem::from_pixels(cams, &vec![(0.0, 0.0); n]).expect("valid problem")
}

pub fn sa2() -> TriangulationProblem {
    at_origin(2)
}

pub fn sa3() -> TriangulationProblem {
    at_origin(3)
}

pub fn sa4() -> TriangulationProblem {
    at_origin(4)
}

pub fn con() -> TriangulationProblem {
    let cams: Vec<_> = cameras().into_iter().take(3).collect();
    TriangulationProblem::from_pixels(cams, &[(0.9, -0.9), (0.6, 2.0), (2.0, 1.3)])
        .expect("valid problem")
}

/// Published reference solution for one synthetic instance.
#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub name: &'static str,
    pub point: [f64; 3],
    pub cost: f64,
}

impl Reference {
    pub fn scene_point(&self) -> ScenePoint {
        ScenePoint::new(self.point[0], self.point[1], self.point[2])
    }

    pub fn problem(&self) -> TriangulationProblem {
        match self.name {
            "SA2" => sa2(),
            "SA3" => sa3(),
            "SA4" => sa4(),
            "Con" => con(),
            _ => unreachable!(),
        }
    }
}

/// Global Gauss-Newton reference solutions.
pub const REFERENCES: [Reference; 4] = [
    Reference {
        name: "SA2",
        point: [-0.272727272727273, -0.181818181818182, 0.636363636363636],
        cost: 0.055555555555556,
    },
    Reference {
        name: "SA3",
        point: [-0.302506061882800, -0.160909312731383, 0.799090767385097],
        cost: 0.105211035962142,
    },
    Reference {
        name: "SA4",
        point: [-0.232284268136407, -0.334519054968205, 0.696806894375664],
        cost: 0.209906166263248,
    },
    Reference {
        name: "Con",
        point: [1.424098078272550, -1.238341159147880, 0.115482211291935],
        cost: 1.223123745015136,
    },
];

/// Point and cost reported by the fractional-programming/LMI benchmark on `Con`.
pub const CON_SUBOPTIMAL: Reference = Reference {
    name: "Con",
    point: [1.314094728910344, -1.106491029764633, 0.043599248387159],
    cost: 1.265349079248799,
};
