use crate::error::{Error, Result};
use crate::model::{FlowMap, HybridModel, SwitchingFunction};

use super::require;

/// Mass `m` on a spring, carrying two inertial masses through dry-friction
/// contacts, driven by `u = amp sin(omega t + phi)`.
///
/// State order: `x_m, v_m, x_M1, v_M1, x_M2, v_M2, t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickSlip2Params {
    pub m: f64,
    pub m1: f64,
    pub m2: f64,
    pub k: f64,
    pub fc1: f64,
    pub fc2: f64,
    pub amp: f64,
    pub omega: f64,
    pub phi: f64,
    pub x0: [f64; 6],
}

impl Default for StickSlip2Params {
    fn default() -> Self {
        Self {
            m: 1.0,
            m1: 1.0,
            m2: 1.0,
            k: 0.88,
            fc1: 0.01996,
            fc2: 0.062,
            amp: 1.0,
            omega: 0.073,
            phi: 0.0,
            x0: [0.8295, 0.5932, 0.8491, 0.8726, 0.3725, 0.9335],
        }
    }
}

pub const STATE_NAMES: [&str; 7] = ["x_m", "v_m", "x_M1", "v_M1", "x_M2", "v_M2", "t"];
const CLOCK: usize = 6;

impl StickSlip2Params {
    pub fn validate(&self) -> Result<()> {
        require(self.m > 0.0, "m", self.m)?;
        require(self.m1 > 0.0, "M1", self.m1)?;
        require(self.m2 > 0.0, "M2", self.m2)?;
        require(self.k >= 0.0, "k", self.k)?;
        require(self.fc1 >= 0.0, "Fc1", self.fc1)?;
        require(self.fc2 >= 0.0, "Fc2", self.fc2)?;
        require(true, "amp", self.amp)?;
        require(true, "omega", self.omega)?;
        require(true, "phi", self.phi)?;
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be finite".into()));
        }
        Ok(())
    }

    pub fn forcing(&self, t: f64) -> f64 {
        self.amp * (self.omega * t + self.phi).sin()
    }

    /// Initial state with the clock at zero.
    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = self.x0.to_vec();
        x.push(0.0);
        x
    }

    /// Net external force on `m`, `u - k x_m`.
    pub fn drive(&self, x: &[f64]) -> f64 {
        self.forcing(x[CLOCK]) - self.k * x[0]
    }
}

/// Region index of mode `q` (1..=4).
///
/// `q1` slips positively on both contacts, `q2` negatively on the first
/// only, `q3` negatively on both and `q4` negatively on the second only.
pub fn cs1_region(q: usize) -> usize {
    match q {
        1 => 3,
        2 => 2,
        3 => 0,
        4 => 1,
        _ => panic!("mode index must be 1..=4, got {q}"),
    }
}

pub fn make_case_study_1(params: StickSlip2Params) -> Result<HybridModel> {
    params.validate()?;
    let p = params;
    let velocity_gap = |name: &str, other: usize| {
        SwitchingFunction::new(name, move |x: &[f64]| x[1] - x[other])
            .with_gradient(move |_: &[f64], g: &mut [f64]| {
                g.fill(0.0);
                g[1] = 1.0;
                g[other] = -1.0;
            })
            .affine()
    };
    let flow = |label: &str, sa: f64, sb: f64| {
        FlowMap::new(label, move |x: &[f64], d: &mut [f64]| {
            let f1 = sa * p.fc1;
            let f2 = sb * p.fc2;
            d[0] = x[1];
            d[1] = (p.drive(x) - f1 - f2) / p.m;
            d[2] = x[3];
            d[3] = f1 / p.m1;
            d[4] = x[5];
            d[5] = f2 / p.m2;
            d[CLOCK] = 1.0;
        })
    };
    HybridModel::builder(STATE_NAMES)
        .switching(velocity_gap("a", 3))
        .switching(velocity_gap("b", 5))
        .flow(flow("q3", -1.0, -1.0))
        .flow(flow("q4", 1.0, -1.0))
        .flow(flow("q2", -1.0, 1.0))
        .flow(flow("q1", 1.0, 1.0))
        .clock(CLOCK)
        .build()
}

/// Normal velocities of the four modes on the two manifolds, written out
/// per mode. Row `q - 1` holds mode `q`; columns are `a`, `b`.
pub fn oracle_lie_cs1(params: &StickSlip2Params, x: &[f64]) -> [[f64; 2]; 4] {
    let StickSlip2Params {
        m, m1, m2, fc1, fc2, ..
    } = *params;
    let a = params.drive(x);
    let r1 = (m + m1) / m1;
    let r2 = (m + m2) / m2;
    [
        [(a - r1 * fc1 - fc2) / m, (a - fc1 - r2 * fc2) / m],
        [(a + r1 * fc1 - fc2) / m, (a + fc1 - r2 * fc2) / m],
        [(a + r1 * fc1 + fc2) / m, (a + fc1 + r2 * fc2) / m],
        [(a - r1 * fc1 + fc2) / m, (a - fc1 + r2 * fc2) / m],
    ]
}

/// Sliding regimes of the two-contact oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cs1Regime {
    /// `m` sticks to `M1` while slipping positively on `M2`.
    A1,
    /// `m` sticks to `M1` while slipping negatively on `M2`.
    A2,
    /// `m` sticks to `M2` while slipping positively on `M1`.
    B1,
    /// `m` sticks to `M2` while slipping negatively on `M1`.
    B2,
    /// All three masses stick together.
    Delta,
}

impl Cs1Regime {
    pub const ALL: [Cs1Regime; 5] = [
        Cs1Regime::A1,
        Cs1Regime::A2,
        Cs1Regime::B1,
        Cs1Regime::B2,
        Cs1Regime::Delta,
    ];

    /// Active manifolds (0 = a, 1 = b) and the sign of the inactive one.
    pub fn active_set(self) -> (Vec<usize>, [i8; 2]) {
        match self {
            Cs1Regime::A1 => (vec![0], [0, 1]),
            Cs1Regime::A2 => (vec![0], [0, -1]),
            Cs1Regime::B1 => (vec![1], [1, 0]),
            Cs1Regime::B2 => (vec![1], [-1, 0]),
            Cs1Regime::Delta => (vec![0, 1], [0, 0]),
        }
    }

    /// Strict attractivity conditions for this regime.
    pub fn attractive(self, params: &StickSlip2Params, x: &[f64]) -> bool {
        let a = params.drive(x);
        let s1 = (params.m + params.m1) / params.m1 * params.fc1;
        let s2 = (params.m + params.m2) / params.m2 * params.fc2;
        let a1 = (a - params.fc2).abs() < s1;
        let a2 = (a + params.fc2).abs() < s1;
        let b1 = (a - params.fc1).abs() < s2;
        let b2 = (a + params.fc1).abs() < s2;
        match self {
            Cs1Regime::A1 => a1,
            Cs1Regime::A2 => a2,
            Cs1Regime::B1 => b1,
            Cs1Regime::B2 => b2,
            Cs1Regime::Delta => a1 && a2 && b1 && b2,
        }
    }
}

/// State derivative (without the clock) of the sliding motion in `regime`.
pub fn oracle_sliding_cs1(params: &StickSlip2Params, regime: Cs1Regime, x: &[f64]) -> [f64; 6] {
    let StickSlip2Params {
        m, m1, m2, fc1, fc2, ..
    } = *params;
    let a = params.drive(x);
    let (vm, vm1, vm2) = match regime {
        Cs1Regime::A1 => {
            let v = (a - fc2) / (m + m1);
            (v, v, fc2 / m2)
        }
        Cs1Regime::A2 => {
            let v = (a + fc2) / (m + m1);
            (v, v, -fc2 / m2)
        }
        Cs1Regime::B1 => {
            let v = (a - fc1) / (m + m2);
            (v, fc1 / m1, v)
        }
        Cs1Regime::B2 => {
            let v = (a + fc1) / (m + m2);
            (v, -fc1 / m1, v)
        }
        Cs1Regime::Delta => {
            let v = a / (m + m1 + m2);
            (v, v, v)
        }
    };
    [x[1], vm, x[3], vm1, x[5], vm2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_drive(p: &StickSlip2Params, a: f64) -> Vec<f64> {
        // k = 0 and no forcing: the drive is set through the spring instead.
        let mut x = vec![0.0; 7];
        x[0] = -a / p.k;
        x
    }

    #[test]
    fn mode_q1_acceleration() {
        let p = StickSlip2Params::default();
        let model = make_case_study_1(p).unwrap();
        let x = [0.3, 0.9, 0.0, 0.1, 0.0, 0.2, 5.0];
        let d = model.eval_flow(cs1_region(1), &x);
        let expected = (p.forcing(5.0) - p.k * 0.3 - p.fc1 - p.fc2) / p.m;
        assert!((d[1] - expected).abs() < 1e-15);
        assert_eq!(model.region_label(cs1_region(1)), "q1");
    }

    #[test]
    fn mode_q3_inertial_acceleration() {
        let p = StickSlip2Params::default();
        let model = make_case_study_1(p).unwrap();
        let d = model.eval_flow(cs1_region(3), &[0.0; 7]);
        assert_eq!(d[3], -p.fc1 / p.m1);
    }

    #[test]
    fn at_rest_without_forces() {
        let p = StickSlip2Params {
            k: 0.0,
            fc1: 0.0,
            fc2: 0.0,
            amp: 0.0,
            ..StickSlip2Params::default()
        };
        let model = make_case_study_1(p).unwrap();
        for q in 1..=4 {
            let d = model.eval_flow(cs1_region(q), &[0.1, 0.0, 0.2, 0.0, 0.3, 0.0, 0.0]);
            assert_eq!([d[1], d[3], d[5]], [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn initial_mode_is_q3() {
        let p = StickSlip2Params::default();
        let model = make_case_study_1(p).unwrap();
        match model.region_index(&p.initial_state()) {
            crate::model::RegionLookup::Region(r) => assert_eq!(model.region_label(r), "q3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oracle_lie_hand_values() {
        let p = StickSlip2Params {
            fc1: 0.02,
            fc2: 0.06,
            ..StickSlip2Params::default()
        };
        let l = oracle_lie_cs1(&p, &at_drive(&p, 0.05));
        assert!((l[0][0] + 0.05).abs() < 1e-15);
        assert!((l[1][0] - 0.03).abs() < 1e-15);
    }

    #[test]
    fn oracle_lie_symmetry() {
        let p = StickSlip2Params::default();
        let l = oracle_lie_cs1(&p, &at_drive(&p, 0.0));
        assert!((l[0][0] + l[2][0]).abs() < 1e-15);
        assert!((l[1][0] + l[3][0]).abs() < 1e-15);
    }

    #[test]
    fn oracle_sliding_hand_values() {
        let p = StickSlip2Params {
            fc2: 0.06,
            ..StickSlip2Params::default()
        };
        let f = oracle_sliding_cs1(&p, Cs1Regime::A1, &at_drive(&p, 0.05));
        assert!((f[1] + 0.005).abs() < 1e-15);
        assert!((f[5] - 0.06).abs() < 1e-15);
        let f = oracle_sliding_cs1(&p, Cs1Regime::Delta, &at_drive(&p, 0.0));
        assert_eq!([f[1], f[3], f[5]], [0.0, 0.0, 0.0]);
        let f = oracle_sliding_cs1(&p, Cs1Regime::B2, &at_drive(&p, 0.3));
        assert_eq!(f[3], -p.fc1 / p.m1);
    }

    #[test]
    fn rejects_bad_params() {
        let p = StickSlip2Params {
            m: 0.0,
            ..StickSlip2Params::default()
        };
        assert!(matches!(make_case_study_1(p), Err(Error::InvalidArgument(_))));
        let p = StickSlip2Params {
            fc1: -1.0,
            ..StickSlip2Params::default()
        };
        assert!(make_case_study_1(p).is_err());
    }
}
