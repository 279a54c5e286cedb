/// Negative summed delay of the vehicles of one direction over one step,
/// given the distance each covered.
pub fn compute_reward(distances: &[f64], dt: f64, vmax: f64) -> f64 {
    -distances.iter().map(|l| dt - l / vmax).sum::<f64>()
}
