use crate::error::{Error, Result};
use crate::model::{FlowMap, HybridModel, SwitchingFunction};

use super::require;

/// Three masses on a belt moving at `v_d`, tied to the ground and to each
/// other by springs, with a sinusoidal force on the first mass.
///
/// State order: `x1, v1, x2, v2, x3, v3, t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belt3Params {
    pub m: [f64; 3],
    /// Ground springs `k1, k2, k3`.
    pub k: [f64; 3],
    pub k12: f64,
    pub k13: f64,
    pub k23: f64,
    pub fc: [f64; 3],
    pub v_d: f64,
    /// Amplitude of the force on the first mass.
    pub amp: f64,
    pub omega: f64,
    pub x0: [f64; 6],
}

impl Default for Belt3Params {
    fn default() -> Self {
        Self {
            m: [1.0; 3],
            k: [0.01; 3],
            k12: 0.01,
            k13: 0.01,
            k23: 0.01,
            fc: [0.14, 0.13, 0.12],
            v_d: 0.5,
            amp: 1.0,
            omega: 0.24,
            x0: [4.7799, 1.7144, 0.2797, 1.2922, 4.0038, 4.1263],
        }
    }
}

pub const STATE_NAMES: [&str; 7] = ["x1", "v1", "x2", "v2", "x3", "v3", "t"];
const CLOCK: usize = 6;

impl Belt3Params {
    pub fn validate(&self) -> Result<()> {
        for (i, &m) in self.m.iter().enumerate() {
            require(m > 0.0, &format!("m{}", i + 1), m)?;
        }
        for (i, &k) in self.k.iter().enumerate() {
            require(k >= 0.0, &format!("k{}", i + 1), k)?;
        }
        require(self.k12 >= 0.0, "k12", self.k12)?;
        require(self.k13 >= 0.0, "k13", self.k13)?;
        require(self.k23 >= 0.0, "k23", self.k23)?;
        for (i, &f) in self.fc.iter().enumerate() {
            require(f >= 0.0, &format!("Fc{}", i + 1), f)?;
        }
        require(true, "v_d", self.v_d)?;
        require(true, "amp", self.amp)?;
        require(true, "omega", self.omega)?;
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be finite".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = self.x0.to_vec();
        x.push(0.0);
        x
    }

    /// Spring coupling forces on the three masses.
    pub fn coupling(&self, x: &[f64]) -> [f64; 3] {
        let (x1, x2, x3) = (x[0], x[2], x[4]);
        [
            self.k12 * (x2 - x1) + self.k13 * (x3 - x1),
            self.k12 * (x1 - x2) + self.k23 * (x3 - x2),
            self.k13 * (x1 - x3) + self.k23 * (x2 - x3),
        ]
    }

    /// Acceleration of each mass without its friction force.
    pub fn free_acceleration(&self, x: &[f64]) -> [f64; 3] {
        let u = self.coupling(x);
        let drive = self.amp * (self.omega * x[CLOCK]).sin();
        let mut out = [0.0; 3];
        for j in 0..3 {
            let extra = if j == 0 { drive } else { 0.0 };
            out[j] = (u[j] - self.k[j] * x[2 * j] + extra) / self.m[j];
        }
        out
    }
}

fn sign_label(region: usize) -> String {
    (0..3).map(|j| if region >> j & 1 == 1 { '+' } else { '-' }).collect()
}

/// Regions are labelled by the slip directions of the three masses, e.g.
/// `+-+` for masses 1 and 3 faster than the belt and mass 2 slower.
pub fn make_case_study_2(params: Belt3Params) -> Result<HybridModel> {
    params.validate()?;
    let p = params;
    let mut builder = HybridModel::builder(STATE_NAMES);
    for (j, name) in ["a", "b", "c"].into_iter().enumerate() {
        let v = 2 * j + 1;
        builder = builder.switching(
            SwitchingFunction::new(name, move |x: &[f64]| x[v] - p.v_d)
                .with_gradient(move |_: &[f64], g: &mut [f64]| {
                    g.fill(0.0);
                    g[v] = 1.0;
                })
                .affine(),
        );
    }
    for region in 0..8usize {
        let signs: [f64; 3] = std::array::from_fn(|j| if region >> j & 1 == 1 { 1.0 } else { -1.0 });
        builder = builder.flow(FlowMap::new(sign_label(region), move |x: &[f64], d: &mut [f64]| {
            let acc = p.free_acceleration(x);
            for j in 0..3 {
                d[2 * j] = x[2 * j + 1];
                d[2 * j + 1] = acc[j] - signs[j] * p.fc[j] / p.m[j];
            }
            d[CLOCK] = 1.0;
        }));
    }
    builder.clock(CLOCK).build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RegionLookup;

    #[test]
    fn all_positive_flow() {
        let p = Belt3Params::default();
        let model = make_case_study_2(p).unwrap();
        let x = [0.4, 0.9, -0.2, 0.8, 0.1, 0.7, 0.0];
        let r = model.region_from_signs(&[1, 1, 1]);
        assert_eq!(model.region_label(r), "+++");
        let d = model.eval_flow(r, &x);
        let u1 = p.k12 * (-0.2 - 0.4) + p.k13 * (0.1 - 0.4);
        assert!((d[1] - (u1 - p.k[0] * 0.4 - p.fc[0]) / p.m[0]).abs() < 1e-15);
    }

    #[test]
    fn coupling_vanishes_when_aligned() {
        let p = Belt3Params::default();
        let u = p.coupling(&[1.3, 0.0, 1.3, 0.0, 1.3, 0.0, 0.0]);
        assert_eq!(u, [0.0; 3]);
    }

    #[test]
    fn initial_mode_all_slip_positive() {
        let p = Belt3Params::default();
        let model = make_case_study_2(p).unwrap();
        match model.region_index(&p.initial_state()) {
            RegionLookup::Region(r) => assert_eq!(model.region_label(r), "+++"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_massless_block() {
        let mut p = Belt3Params::default();
        p.m[1] = 0.0;
        assert!(make_case_study_2(p).is_err());
    }
}
