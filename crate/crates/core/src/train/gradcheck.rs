use crate::error::Result;
use crate::model::{Episode, ModelParams, Tape};

/// Below this gradient norm a group is compared in absolute terms.
pub const NORM_FLOOR: f64 = 1e-6;

/// Result of comparing backprop against finite differences on one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    /// Entries probed.
    pub checked: usize,
    /// Probes whose stencil crossed a ReLU kink and were retaken with a
    /// smaller step.
    pub refined: usize,
    /// `|ga - gn| / max(|ga| + |gn|, NORM_FLOOR)` over the probed entries,
    /// as vectors.
    pub rel_error: f64,
    pub max_abs_error: f64,
}

/// Central-difference check of the training loss gradient, run in f64.
///
/// At most `per_group` entries of each tensor are probed, evenly spaced.
/// The loss is only piecewise smooth; when `±h` flips a ReLU unit the probe
/// is repeated with `h / 10` until the activation pattern holds.
pub fn gradient_check(
    params: &ModelParams<f32>,
    episodes: &[Episode<'_>],
    h: f64,
    per_group: usize,
) -> Result<Vec<GroupCheck>> {
    let base: ModelParams<f64> = params.cast();
    let mut tape = Tape::new();
    tape.forward(&base, episodes)?;
    let pattern = tape.relu_pattern()?;
    let grad = tape.backward(&base)?;
    let mut shadow = base.clone();
    let names: Vec<String> = base.tensors().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::with_capacity(names.len());
    for (k, name) in names.into_iter().enumerate() {
        let len = base.tensors()[k].1.as_slice().len();
        let stride = len.div_ceil(per_group.max(1)).max(1);
        let (mut diff, mut norm_a, mut norm_n, mut max_abs) = (0.0, 0.0, 0.0, 0.0f64);
        let (mut checked, mut refined) = (0, 0);
        for i in (0..len).step_by(stride) {
            let orig = base.tensors()[k].1.as_slice()[i];
            let at = |v: f64, shadow: &mut ModelParams<f64>| -> Result<(f64, bool)> {
                shadow.tensors_mut()[k].1.as_mut_slice()[i] = v;
                let mut t = Tape::new();
                let l = t.forward(shadow, episodes)?;
                Ok((l, t.relu_pattern()? == pattern))
            };
            let mut step = h;
            let gn = loop {
                let (up, same_up) = at(orig + step, &mut shadow)?;
                let (down, same_down) = at(orig - step, &mut shadow)?;
                if (same_up && same_down) || step < h * 1e-4 {
                    break (up - down) / (2.0 * step);
                }
                step /= 10.0;
            };
            shadow.tensors_mut()[k].1.as_mut_slice()[i] = orig;
            if step < h {
                refined += 1;
            }
            let ga = grad.tensors()[k].1.as_slice()[i];
            diff += (ga - gn) * (ga - gn);
            norm_a += ga * ga;
            norm_n += gn * gn;
            max_abs = max_abs.max((ga - gn).abs());
            checked += 1;
        }
        let rel_error = diff.sqrt() / (norm_a.sqrt() + norm_n.sqrt()).max(NORM_FLOOR);
        out.push(GroupCheck { name, checked, refined, rel_error, max_abs_error: max_abs });
    }
    Ok(out)
}
