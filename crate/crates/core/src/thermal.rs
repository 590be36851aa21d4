//! HVAC temperature propagation and PV output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::HvacParams;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermalError {
    #[error("HVAC power {power} kW outside [0, {p_max}]")]
    PowerOutOfRange { power: f64, p_max: f64 },
    #[error("series `{name}` has {found} entries, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("`{name}` must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
}

/// Indoor temperatures `0..=T` (entry 0 is the initial value) and HVAC
/// energy per slot `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalTrajectory<S> {
    pub indoor_temp: Vec<S>,
    pub hvac_energy: Vec<S>,
}

/// One step of the first-order heating model with no range check on `p`:
/// `ε·t_in + (1−ε)·(t_out + η·p/A)`.
pub fn indoor_step<S: Scalar>(t_in: S, t_out: S, p: S, params: &HvacParams) -> S {
    let eps = S::from_real(params.epsilon);
    let eta = S::from_real(params.eta_hvac);
    let a = S::from_real(params.conductivity_a);
    eps * t_in + (S::one() - eps) * (t_out + eta * p / a)
}

/// Indoor temperature at the end of a slot run at HVAC power `p`.
pub fn next_indoor_temperature<S: Scalar>(
    t_in: S,
    t_out: S,
    p: S,
    params: &HvacParams,
) -> Result<S, ThermalError> {
    if p < S::zero() || p > S::from_real(params.p_max) {
        return Err(ThermalError::PowerOutOfRange {
            power: p.to_real(),
            p_max: params.p_max,
        });
    }
    Ok(indoor_step(t_in, t_out, p, params))
}

/// Composes [`next_indoor_temperature`] over the horizon.
pub fn simulate_indoor_trajectory<S: Scalar>(
    t_in_initial: S,
    t_out: &[S],
    power: &[S],
    params: &HvacParams,
    slot_hours: S,
) -> Result<ThermalTrajectory<S>, ThermalError> {
    if power.len() != t_out.len() {
        return Err(ThermalError::LengthMismatch {
            name: "power",
            expected: t_out.len(),
            found: power.len(),
        });
    }
    let mut indoor_temp = Vec::with_capacity(t_out.len() + 1);
    indoor_temp.push(t_in_initial);
    let mut current = t_in_initial;
    for (&out, &p) in t_out.iter().zip(power) {
        current = next_indoor_temperature(current, out, p, params)?;
        indoor_temp.push(current);
    }
    Ok(ThermalTrajectory {
        indoor_temp,
        hvac_energy: power.iter().map(|&p| p * slot_hours).collect(),
    })
}

/// PV energy over one slot, kWh.
pub fn pv_output_energy<S: Scalar>(
    ghi: S,
    area: S,
    efficiency: S,
    slot_hours: S,
) -> Result<S, ThermalError> {
    for (name, v) in [
        ("ghi", ghi),
        ("area", area),
        ("efficiency", efficiency),
        ("slot_hours", slot_hours),
    ] {
        if v < S::zero() {
            return Err(ThermalError::Negative {
                name,
                value: v.to_real(),
            });
        }
    }
    Ok(ghi * area * efficiency * slot_hours)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::reference_hvac;
    use crate::Exact;
    use num_traits::Signed;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Exact {
        Exact::new(n, d)
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let p = reference_hvac();
        assert_eq!(next_indoor_temperature(70.0, 70.0, 0.0, &p).unwrap(), 70.0);
    }

    #[test]
    fn free_cooling_step() {
        let p = reference_hvac();
        let t = next_indoor_temperature(q(70, 1), q(30, 1), q(0, 1), &p).unwrap();
        assert_eq!(t, q(58, 1));
    }

    #[test]
    fn heating_step() {
        let p = reference_hvac();
        // 0.7*68 + 0.3*(30 + 2.5*2.8/0.14) = 47.6 + 0.3*80
        let t = next_indoor_temperature(q(68, 1), q(30, 1), q(28, 10), &p).unwrap();
        assert_eq!(t, q(716, 10));
        let f: f64 = next_indoor_temperature(68.0, 30.0, 2.8, &p).unwrap();
        assert!((f - 71.6).abs() < 1e-12);
    }

    #[test]
    fn power_outside_rating_rejected() {
        let p = reference_hvac();
        assert!(next_indoor_temperature(70.0, 30.0, -0.1, &p).is_err());
        assert!(next_indoor_temperature(70.0, 30.0, 15.01, &p).is_err());
        assert!(next_indoor_temperature(70.0, 30.0, 15.0, &p).is_ok());
    }

    #[test]
    fn constant_trajectory_at_equilibrium() {
        let p = reference_hvac();
        let tr = simulate_indoor_trajectory(70.7, &[70.7; 5], &[0.0; 5], &p, 1.0).unwrap();
        assert_eq!(tr.indoor_temp, vec![70.7; 6]);
        assert_eq!(tr.hvac_energy, vec![0.0; 5]);
    }

    #[test]
    fn trajectory_length_mismatch() {
        let p = reference_hvac();
        let err = simulate_indoor_trajectory(70.0, &[50.0; 3], &[1.0; 2], &p, 1.0).unwrap_err();
        assert!(matches!(err, ThermalError::LengthMismatch { .. }));
    }

    #[test]
    fn pv_output_values() {
        assert_eq!(pv_output_energy(0.0, 10.0, 0.9, 1.0).unwrap(), 0.0);
        assert_eq!(pv_output_energy(q(1, 1), q(10, 1), q(9, 10), q(1, 1)).unwrap(), q(9, 1));
        assert_eq!(pv_output_energy(q(1, 2), q(5, 1), q(9, 10), q(1, 1)).unwrap(), q(9, 4));
        assert!(pv_output_energy(-0.1, 5.0, 0.9, 1.0).is_err());
    }

    fn small_ratio() -> impl Strategy<Value = Exact> {
        (-2000i64..2000, 1i64..50).prop_map(|(n, d)| Exact::new(n, d))
    }

    proptest! {
        #[test]
        fn step_is_affine_exactly(
            a in (small_ratio(), small_ratio(), small_ratio()),
            b in (small_ratio(), small_ratio(), small_ratio()),
            lambda in (0i64..=20).prop_map(|n| Exact::new(n, 20)),
        ) {
            let p = reference_hvac();
            let one = Exact::from_real(1.0);
            let mix = |x: Exact, y: Exact| lambda * x + (one - lambda) * y;
            let combined = indoor_step(mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2), &p);
            let separate = lambda * indoor_step(a.0, a.1, a.2, &p)
                + (one - lambda) * indoor_step(b.0, b.1, b.2, &p);
            prop_assert_eq!(combined, separate);
        }

        #[test]
        fn step_strictly_increasing_in_power_and_outdoor(
            t_in in 40.0f64..90.0, t_out in -10.0f64..90.0, p in 0.0f64..14.0, dp in 0.01f64..1.0,
        ) {
            let params = reference_hvac();
            let base = next_indoor_temperature(t_in, t_out, p, &params).unwrap();
            prop_assert!(next_indoor_temperature(t_in, t_out, p + dp, &params).unwrap() > base);
            prop_assert!(next_indoor_temperature(t_in, t_out + dp, p, &params).unwrap() > base);
        }

        #[test]
        fn trajectory_is_repeated_steps(
            out in proptest::collection::vec(30.0f64..70.0, 1..12),
            seed_p in proptest::collection::vec(0.0f64..15.0, 12),
        ) {
            let params = reference_hvac();
            let power = &seed_p[..out.len()];
            let tr = simulate_indoor_trajectory(68.0, &out, power, &params, 0.5).unwrap();
            let mut t = 68.0;
            for k in 0..out.len() {
                t = next_indoor_temperature(t, out[k], power[k], &params).unwrap();
                prop_assert_eq!(tr.indoor_temp[k + 1], t);
                prop_assert_eq!(tr.hvac_energy[k], power[k] * 0.5);
            }
        }

        #[test]
        fn pv_output_linear_and_zero_iff_factor_zero(
            g in small_ratio(), s in small_ratio(), e in (0i64..=10).prop_map(|n| Exact::new(n, 10)),
        ) {
            let (g, s) = (g.abs(), s.abs());
            let one = Exact::from_real(1.0);
            let two = one + one;
            let base = pv_output_energy(g, s, e, one).unwrap();
            prop_assert_eq!(pv_output_energy(two * g, s, e, one).unwrap(), two * base);
            prop_assert_eq!(pv_output_energy(g, two * s, e, one).unwrap(), two * base);
            let any_zero = g == Exact::from_real(0.0) || s == Exact::from_real(0.0) || e == Exact::from_real(0.0);
            prop_assert_eq!(base == Exact::from_real(0.0), any_zero);
        }
    }
}
