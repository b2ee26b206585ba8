//! Quadrature rules on the reference triangle `{(x, y): x, y ≥ 0, x + y ≤ 1}`
//! (area ½) and on the unit interval.

/// Points and weights on the reference triangle; weights sum to ½.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Points and weights on `[0, 1]`; weights sum to 1.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn symmetric_orbit(a: f64, b: f64) -> Vec<[f64; 2]> {
    // barycentric (a, a, b) and its distinct permutations, mapped to (λ₁, λ₂)
    vec![[a, a], [b, a], [a, b]]
}

fn full_orbit(a: f64, b: f64, c: f64) -> Vec<[f64; 2]> {
    vec![[a, b], [b, a], [b, c], [c, b], [c, a], [a, c]]
}

impl TriangleRule {
    /// Seven-point rule exact for polynomials of degree 5.
    pub fn degree5() -> Self {
        let s = 15f64.sqrt();
        let a1 = (6.0 - s) / 21.0;
        let a2 = (6.0 + s) / 21.0;
        let w1 = (155.0 - s) / 2400.0;
        let w2 = (155.0 + s) / 2400.0;
        let mut points = vec![[1.0 / 3.0, 1.0 / 3.0]];
        let mut weights = vec![9.0 / 80.0];
        points.extend(symmetric_orbit(a1, 1.0 - 2.0 * a1));
        weights.extend([w1; 3]);
        points.extend(symmetric_orbit(a2, 1.0 - 2.0 * a2));
        weights.extend([w2; 3]);
        TriangleRule {
            points,
            weights,
            degree: 5,
        }
    }

    /// Twelve-point rule exact for polynomials of degree 6.
    pub fn degree6() -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let a = 0.249_286_745_170_910;
        points.extend(symmetric_orbit(a, 1.0 - 2.0 * a));
        weights.extend([0.116_786_275_726_379 / 2.0; 3]);
        let a = 0.063_089_014_491_502;
        points.extend(symmetric_orbit(a, 1.0 - 2.0 * a));
        weights.extend([0.050_844_906_370_207 / 2.0; 3]);
        let (a, b) = (0.053_145_049_844_817, 0.310_352_451_033_784);
        points.extend(full_orbit(a, b, 1.0 - a - b));
        weights.extend([0.082_851_075_618_374 / 2.0; 6]);
        TriangleRule {
            points,
            weights,
            degree: 6,
        }
    }
}

impl LineRule {
    pub fn gauss3() -> Self {
        let d = (0.6f64).sqrt() / 2.0;
        LineRule {
            points: vec![0.5 - d, 0.5, 0.5 + d],
            weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
            degree: 5,
        }
    }

    /// The rule repeated on `pieces` equal subintervals.
    pub fn composite(&self, pieces: usize) -> Self {
        let h = 1.0 / pieces as f64;
        let mut points = Vec::with_capacity(pieces * self.points.len());
        let mut weights = Vec::with_capacity(points.capacity());
        for k in 0..pieces {
            for (p, w) in self.points.iter().zip(&self.weights) {
                points.push((k as f64 + p) * h);
                weights.push(w * h);
            }
        }
        LineRule {
            points,
            weights,
            degree: self.degree,
        }
    }

    pub fn gauss5() -> Self {
        let r = |x: f64| 0.5 + 0.5 * x;
        let s = (10.0f64 / 7.0).sqrt();
        let x1 = (5.0 - 2.0 * s).sqrt() / 3.0;
        let x2 = (5.0 + 2.0 * s).sqrt() / 3.0;
        let w1 = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
        let w2 = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
        LineRule {
            points: vec![r(-x2), r(-x1), 0.5, r(x1), r(x2)],
            weights: vec![w2 / 2.0, w1 / 2.0, 64.0 / 225.0, w1 / 2.0, w2 / 2.0],
            degree: 9,
        }
    }
}
