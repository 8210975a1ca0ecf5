//! Adversarial and VAE objectives with their gradients.

use super::{NnError, Scalar};

/// Floor applied inside every logarithm.
pub const LOG_EPS: f64 = 1e-7;

fn check_prob(v: f64) -> Result<(), NnError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(NnError::Domain(format!("{v} is not a probability")))
    }
}

fn neg_log(v: f64) -> f64 {
    -v.max(LOG_EPS).ln()
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    xs.sum::<f64>() / n as f64
}

/// `(loss_D, loss_G)` from discriminator outputs on real and generated
/// batches. The generator term is the non-saturating `-log D(G(z))`.
pub fn adversarial_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64), NnError> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(NnError::Domain("empty discriminator batch".into()));
    }
    for &v in d_real.iter().chain(d_fake) {
        check_prob(v)?;
    }
    let loss_d = mean(d_real.iter().map(|&s| neg_log(s))) + mean(d_fake.iter().map(|&s| neg_log(1.0 - s)));
    let loss_g = mean(d_fake.iter().map(|&s| neg_log(s)));
    Ok((loss_d, loss_g))
}

fn sig<T: Scalar>(l: T) -> f64 {
    1.0 / (1.0 + (-l.as_f64()).exp())
}

/// Discriminator loss evaluated from logits, with gradients with respect to
/// the real and fake logits.
pub fn discriminator_loss<T: Scalar>(real_logits: &[T], fake_logits: &[T]) -> (f64, Vec<T>, Vec<T>) {
    let nr = real_logits.len() as f64;
    let nf = fake_logits.len() as f64;
    let mut loss = 0.0;
    let dr = real_logits
        .iter()
        .map(|&l| {
            let s = sig(l);
            loss += neg_log(s) / nr;
            T::of(if s > LOG_EPS { -(1.0 - s) / nr } else { 0.0 })
        })
        .collect();
    let df = fake_logits
        .iter()
        .map(|&l| {
            let s = sig(l);
            loss += neg_log(1.0 - s) / nf;
            T::of(if 1.0 - s > LOG_EPS { s / nf } else { 0.0 })
        })
        .collect();
    (loss, dr, df)
}

/// Non-saturating generator loss from the discriminator logits on generated
/// samples, with its gradient.
pub fn generator_loss<T: Scalar>(fake_logits: &[T]) -> (f64, Vec<T>) {
    let n = fake_logits.len() as f64;
    let mut loss = 0.0;
    let d = fake_logits
        .iter()
        .map(|&l| {
            let s = sig(l);
            loss += neg_log(s) / n;
            T::of(if s > LOG_EPS { -(1.0 - s) / n } else { 0.0 })
        })
        .collect();
    (loss, d)
}

/// KL(q(z|x) || N(0, I)) averaged over samples and latent dimensions,
/// with gradients with respect to `mu` and `logvar`.
pub fn kl_divergence<T: Scalar>(mu: &[T], logvar: &[T]) -> (f64, Vec<T>, Vec<T>) {
    let n = mu.len() as f64;
    let mut kl = 0.0;
    let mut dmu = Vec::with_capacity(mu.len());
    let mut dlv = Vec::with_capacity(mu.len());
    for (&m, &lv) in mu.iter().zip(logvar) {
        let (m, lv) = (m.as_f64(), lv.as_f64());
        kl += -0.5 * (1.0 + lv - m * m - lv.exp()) / n;
        dmu.push(T::of(m / n));
        dlv.push(T::of(0.5 * (lv.exp() - 1.0) / n));
    }
    (kl, dmu, dlv)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> (f64, Vec<T>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = (p - t).as_f64();
            loss += d * d / n;
            T::of(2.0 * d / n)
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_discriminator_has_zero_loss() {
        let (ld, _) = adversarial_losses(&[1.0, 1.0], &[0.0]).unwrap();
        assert!(ld.abs() < 1e-6);
    }

    #[test]
    fn coin_flip_discriminator() {
        let (ld, lg) = adversarial_losses(&[0.5; 4], &[0.5; 4]).unwrap();
        assert!((ld - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ld - 1.3863).abs() < 1e-4);
        assert!((lg - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn out_of_range_is_a_domain_error() {
        assert!(matches!(adversarial_losses(&[1.2], &[0.1]), Err(NnError::Domain(_))));
        assert!(matches!(adversarial_losses(&[0.2], &[f64::NAN]), Err(NnError::Domain(_))));
    }

    #[test]
    fn logit_losses_agree_with_probability_form() {
        let real = [0.3f64, -1.2, 2.0];
        let fake = [-0.4f64, 0.9];
        let s = |v: &[f64]| v.iter().map(|&l| 1.0 / (1.0 + (-l).exp())).collect::<Vec<_>>();
        let (ld, lg) = adversarial_losses(&s(&real), &s(&fake)).unwrap();
        assert!((discriminator_loss(&real, &fake).0 - ld).abs() < 1e-12);
        assert!((generator_loss(&fake).0 - lg).abs() < 1e-12);
    }

    #[test]
    fn kl_and_mse_fixed_points() {
        let (kl, dmu, dlv) = kl_divergence(&[0.0f64; 6], &[0.0f64; 6]);
        assert_eq!(kl, 0.0);
        assert!(dmu.iter().chain(&dlv).all(|&g| g == 0.0));
        let (l, g) = mse(&[0.25f64, -0.5], &[0.25, -0.5]);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (l, _) = mse(&[1.5f64, 0.5], &[1.0, 0.0]);
        assert!((l - 0.25).abs() < 1e-15);
    }
}
