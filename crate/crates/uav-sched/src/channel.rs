//! UAV-to-user link models.
//!
//! Ground links mix LoS and NLoS propagation probabilistically by elevation
//! angle; aerial links are pure-LoS mmWave with free-space path loss. All
//! functions are pure and operate on immutable scenario data.

use crate::error::{Error, Result};
use crate::scenario::{ChannelParams, UavConfig, UserKind, UserProfile};

/// Full link budget for serving one user from its hovering point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Serving distance, meters.
    pub distance: f64,
    /// Elevation angle of the UAV seen from the user, degrees.
    pub elevation_deg: f64,
    /// LoS probability (1.0 for aerial links).
    pub los_probability: f64,
    /// Mean channel gain (ground, linear) or path loss (aerial, linear).
    pub mean_gain_or_pathloss: f64,
    /// Downlink SNR, linear.
    pub snr: f64,
    /// Downlink rate, bits/second.
    pub rate: f64,
}

/// Euclidean distance between the UAV at `(uav_xy, uav_alt)` and a user.
pub fn distance_3d(uav_xy: (f64, f64), uav_alt: f64, user: &UserProfile) -> f64 {
    let dx = uav_xy.0 - user.x;
    let dy = uav_xy.1 - user.y;
    let dz = uav_alt - user.h;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Time to fly `distance` meters at `speed` m/s.
pub fn flight_time(distance: f64, speed: f64) -> Result<f64> {
    if !(speed > 0.0) {
        return Err(Error::NonPositiveSpeed(speed));
    }
    Ok(distance / speed)
}

/// Elevation angle asin(gap/distance) in degrees. `altitude_gap` must not
/// exceed `distance`, which always holds for 3D distances.
pub fn elevation_deg(altitude_gap: f64, distance: f64) -> f64 {
    debug_assert!(altitude_gap <= distance + 1e-12);
    (altitude_gap / distance).clamp(-1.0, 1.0).asin().to_degrees()
}

/// LoS probability of a ground link at the given elevation angle (degrees).
/// Strictly increasing in the angle.
pub fn los_probability(elevation_deg: f64, p: &ChannelParams) -> f64 {
    1.0 / (1.0 + p.env_x * (-p.env_y * (elevation_deg - p.env_x)).exp())
}

/// Mean ground-link channel gain: the LoS/NLoS mix of d^-alpha.
pub fn ground_mean_gain(distance: f64, elevation_deg: f64, p: &ChannelParams) -> Result<f64> {
    if distance == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let p_los = los_probability(elevation_deg, p);
    let base = distance.powf(-p.path_loss_exponent);
    Ok(p_los * base + (1.0 - p_los) * p.nlos_attenuation * base)
}

/// Ground downlink rate B*log2(1 + P*g/sigma^2) in bits/second.
pub fn ground_rate(gain: f64, uav: &UavConfig, p: &ChannelParams) -> f64 {
    let snr = ground_snr(gain, uav, p);
    uav.bandwidth * (1.0 + snr).log2()
}

fn ground_snr(gain: f64, uav: &UavConfig, p: &ChannelParams) -> f64 {
    uav.tx_power * gain / p.noise_power_w()
}

/// Free-space mmWave path loss plus the LoS attenuation constant, in dB.
pub fn aerial_pathloss_db(distance: f64, p: &ChannelParams) -> Result<f64> {
    if distance == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let free_space = 20.0 * (4.0 * std::f64::consts::PI * distance * p.mmwave_freq / p.light_speed).log10();
    Ok(free_space + p.los_attenuation_db)
}

/// Aerial downlink rate B*log2(1 + P/(p*sigma^2)) with the path loss taken
/// linear. Aerial links use the configured bandwidth override when present.
pub fn aerial_rate(pathloss_db: f64, uav: &UavConfig, p: &ChannelParams) -> f64 {
    let pathloss = 10f64.powf(pathloss_db / 10.0);
    let snr = uav.tx_power / (pathloss * p.noise_power_w());
    aerial_bandwidth(uav, p) * (1.0 + snr).log2()
}

fn aerial_bandwidth(uav: &UavConfig, p: &ChannelParams) -> f64 {
    p.aerial_bandwidth.unwrap_or(uav.bandwidth)
}

/// Seconds to push the user's requested volume through `rate`.
pub fn transmission_delay(user: &UserProfile, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::UnserveableUser {
            user: user.id,
            rate,
        });
    }
    Ok(user.data_size / rate)
}

/// Link budget for serving `user` from the hovering point directly above or
/// below it, so the serving distance is the altitude gap |H - h|.
pub fn service_link_budget(
    uav: &UavConfig,
    p: &ChannelParams,
    user: &UserProfile,
) -> Result<LinkBudget> {
    let gap = (uav.altitude - user.h).abs();
    let distance = gap;
    match user.kind {
        UserKind::Ground => {
            let elev = elevation_deg(gap, distance);
            let gain = ground_mean_gain(distance, elev, p)?;
            Ok(LinkBudget {
                distance,
                elevation_deg: elev,
                los_probability: los_probability(elev, p),
                mean_gain_or_pathloss: gain,
                snr: ground_snr(gain, uav, p),
                rate: ground_rate(gain, uav, p),
            })
        }
        UserKind::Aerial => {
            let pl_db = aerial_pathloss_db(distance, p)?;
            let pathloss = 10f64.powf(pl_db / 10.0);
            let snr = uav.tx_power / (pathloss * p.noise_power_w());
            Ok(LinkBudget {
                distance,
                elevation_deg: 90.0,
                los_probability: 1.0,
                mean_gain_or_pathloss: pathloss,
                snr,
                rate: aerial_rate(pl_db, uav, p),
            })
        }
    }
}

/// Downlink rate for serving `user`, dispatched by user kind.
pub fn service_rate(uav: &UavConfig, p: &ChannelParams, user: &UserProfile) -> Result<f64> {
    Ok(service_link_budget(uav, p, user)?.rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground_user(x: f64, y: f64) -> UserProfile {
        UserProfile {
            id: 0,
            kind: UserKind::Ground,
            x,
            y,
            h: 0.0,
            data_size: 5e7,
            endurance: 50.0,
        }
    }

    fn aerial_user(h: f64) -> UserProfile {
        UserProfile {
            id: 1,
            kind: UserKind::Aerial,
            x: 0.0,
            y: 0.0,
            h,
            data_size: 5e7,
            endurance: 50.0,
        }
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn distance_vertical_and_pythagorean() {
        let u = ground_user(0.0, 0.0);
        assert_eq!(distance_3d((0.0, 0.0), 100.0, &u), 100.0);
        let v = UserProfile { h: 100.0, x: 30.0, y: 40.0, ..aerial_user(100.0) };
        assert_eq!(distance_3d((0.0, 0.0), 100.0, &v), 50.0);
        let w = ground_user(60.0, 80.0);
        assert!(rel_close(distance_3d((0.0, 0.0), 100.0, &w), 141.4213562373095, 1e-12));
    }

    #[test]
    fn flight_time_divides() {
        assert_eq!(flight_time(100.0, 50.0).unwrap(), 2.0);
        assert_eq!(flight_time(0.0, 50.0).unwrap(), 0.0);
        assert!(rel_close(flight_time(141.4213562373095, 50.0).unwrap(), 2.8284271247461903, 1e-12));
        assert!(matches!(flight_time(10.0, 0.0), Err(Error::NonPositiveSpeed(_))));
    }

    #[test]
    fn los_probability_values() {
        let p = ChannelParams::default();
        // At phi = X the exponent vanishes: 1/(1+X).
        assert!(rel_close(los_probability(11.95, &p), 0.07722007722007722, 1e-12));
        assert!(rel_close(los_probability(90.0, &p), 0.9997067139222499, 1e-9));
        // Defined (and small) at zero elevation as well.
        assert!(rel_close(los_probability(0.0, &p), 0.016207653459802424, 1e-9));
    }

    #[test]
    fn los_probability_monotone() {
        let p = ChannelParams::default();
        let mut prev = 0.0;
        for i in 1..=90 {
            let v = los_probability(i as f64, &p);
            assert!(v > prev, "not increasing at {i}");
            assert!(v > 0.0 && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn ground_gain_limits_and_value() {
        let p = ChannelParams::default();
        // Pure-LoS / pure-NLoS limits bound the mix.
        let g = ground_mean_gain(100.0, 90.0, &p).unwrap();
        let base = 100.0f64.powf(-2.0);
        assert!(g <= base && g >= p.nlos_attenuation * base);
        assert!(rel_close(g, 9.99794699745575e-05, 1e-9));
        assert!(matches!(ground_mean_gain(0.0, 45.0, &p), Err(Error::ZeroDistance)));
    }

    #[test]
    fn ground_gain_decreasing_in_distance() {
        let p = ChannelParams::default();
        let mut prev = f64::INFINITY;
        for d in [10.0, 50.0, 100.0, 500.0, 2000.0] {
            let g = ground_mean_gain(d, 45.0, &p).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn ground_rate_values() {
        let p = ChannelParams::default();
        let uav = UavConfig::default();
        // Unit SNR -> rate equals the bandwidth.
        let g_unit = p.noise_power_w() / uav.tx_power;
        assert!(rel_close(ground_rate(g_unit, &uav, &p), 1e6, 1e-12));
        assert_eq!(ground_rate(0.0, &uav, &p), 0.0);
        let rate = ground_rate(9.99794699745575e-05, &uav, &p);
        assert!(rel_close(rate, 23581971.800992902, 1e-9));
    }

    #[test]
    fn aerial_pathloss_values() {
        let p = ChannelParams::default();
        // Where the free-space term vanishes only eta_los remains.
        let d0 = p.light_speed / (4.0 * std::f64::consts::PI * p.mmwave_freq);
        assert!(rel_close(aerial_pathloss_db(d0, &p).unwrap(), 2.0, 1e-9));
        assert!(rel_close(aerial_pathloss_db(100.0, &p).unwrap(), 105.3231330730542, 1e-9));
        // Doubling the distance adds 20*log10(2) dB to the free-space term.
        let a = aerial_pathloss_db(100.0, &p).unwrap();
        let b = aerial_pathloss_db(200.0, &p).unwrap();
        assert!(rel_close(b - a, 6.020599913279624, 1e-9));
        assert!(matches!(aerial_pathloss_db(0.0, &p), Err(Error::ZeroDistance)));
    }

    #[test]
    fn aerial_rate_values() {
        let p = ChannelParams::default();
        let uav = UavConfig::default();
        // Unit SNR -> rate equals the bandwidth.
        let pl_unit_db = 10.0 * (uav.tx_power / p.noise_power_w()).log10();
        assert!(rel_close(aerial_rate(pl_unit_db, &uav, &p), 1e6, 1e-9));
        let rate = aerial_rate(105.3231330730542, &uav, &p);
        assert!(rel_close(rate, 2228621.8328977167, 1e-6));
        // Rate vanishes as the path loss grows.
        assert!(aerial_rate(400.0, &uav, &p) < 1e-3);
    }

    #[test]
    fn aerial_bandwidth_override_scales_rate() {
        let mut p = ChannelParams::default();
        let uav = UavConfig::default();
        let base = aerial_rate(100.0, &uav, &p);
        p.aerial_bandwidth = Some(1e8);
        assert!(rel_close(aerial_rate(100.0, &uav, &p), 100.0 * base, 1e-12));
    }

    #[test]
    fn transmission_delay_cases() {
        let mut u = ground_user(0.0, 0.0);
        u.data_size = 23.58e6;
        assert_eq!(transmission_delay(&u, 23.58e6).unwrap(), 1.0);
        u.data_size = 0.0;
        assert_eq!(transmission_delay(&u, 1e6).unwrap(), 0.0);
        u.data_size = 5e7;
        assert!(rel_close(transmission_delay(&u, 2228621.8328977167).unwrap(), 22.43539000736998, 1e-9));
        assert!(matches!(transmission_delay(&u, 0.0), Err(Error::UnserveableUser { .. })));
    }

    #[test]
    fn service_budget_dispatches_by_kind() {
        let p = ChannelParams::default();
        let uav = UavConfig::default();
        // Ground user is served from straight above: d = H, elevation 90.
        let g = service_link_budget(&uav, &p, &ground_user(37.0, -12.0)).unwrap();
        assert_eq!(g.distance, 100.0);
        assert_eq!(g.elevation_deg, 90.0);
        assert!(rel_close(g.rate, 23581971.800992902, 1e-9));
        // Aerial user at h=60: serving distance is the 40 m altitude gap.
        let a = service_link_budget(&uav, &p, &aerial_user(60.0)).unwrap();
        assert_eq!(a.distance, 40.0);
        assert_eq!(a.los_probability, 1.0);
        assert!(a.rate > 0.0);
        // An aerial user exactly at UAV altitude has no defined link.
        assert!(matches!(
            service_link_budget(&uav, &p, &aerial_user(100.0)),
            Err(Error::ZeroDistance)
        ));
    }

    #[test]
    fn rates_monotone_in_power_and_bandwidth() {
        let p = ChannelParams::default();
        let mut uav = UavConfig::default();
        let g = 1e-6;
        let r0 = ground_rate(g, &uav, &p);
        uav.tx_power = 10.0;
        let r1 = ground_rate(g, &uav, &p);
        uav.bandwidth = 2e6;
        let r2 = ground_rate(g, &uav, &p);
        assert!(r0 < r1 && r1 < r2);
    }
}
