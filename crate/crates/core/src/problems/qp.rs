use crate::error::{check_dim, Result};
use crate::geometry::{project, FeasibleSet, Point};
use crate::network::NetworkModel;

const MAX_ITERS: usize = 50_000;
const CHECK_EVERY: usize = 10;

/// Certified upper bound on `max_u cᵀu - w uᵀ(W̃ ⊗ I_d)u` over a product of
/// `m` simplices of dimension `d`.
///
/// Runs accelerated projected gradient with adaptive restart and returns
/// `φ(u) + FW(u)`, where `FW(u) = max_s <∇φ(u), s - u>` is the Frank-Wolfe
/// gap; by concavity this is always `>= max φ`. Iteration stops once the
/// gap is below `tol * max(1, |φ(u)|)`.
pub fn maximize_concave_on_simplices(
    c: &Point,
    net: &NetworkModel,
    w: f64,
    m: usize,
    d: usize,
    tol: f64,
) -> Result<f64> {
    check_dim(m * d, c.len())?;
    let vertex_max = |g: &Point| -> f64 {
        (0..m)
            .map(|i| g.rows(i * d, d).max())
            .sum()
    };
    if w == 0.0 || net.m() == 1 {
        return Ok(vertex_max(c));
    }
    check_dim(m, net.m())?;
    let set = FeasibleSet::Product {
        parts: vec![FeasibleSet::Simplex { dim: d }; m],
    };
    let phi = |u: &Point| -> Result<f64> { Ok(c.dot(u) - w * net.quadratic_form(u.as_slice(), d)?) };
    let grad = |u: &Point| -> Result<Point> { Ok(c - net.gossip(u.as_slice(), d)? * (2.0 * w)) };
    let step = 1.0 / (2.0 * w * net.lambda_max());

    let mut u = Point::from_element(m * d, 1.0 / d as f64);
    let mut v = u.clone();
    let mut theta: f64 = 1.0;
    let mut best_upper = f64::INFINITY;
    let mut value = phi(&u)?;
    for it in 0..MAX_ITERS {
        let u_next = project(&set, &(&v + grad(&v)? * step))?;
        if (&u_next - &v).dot(&(&u_next - &u)) < 0.0 {
            // momentum points downhill: restart from the current iterate
            theta = 1.0;
            v = u.clone();
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        v = &u_next + (&u_next - &u) * ((theta - 1.0) / theta_next);
        theta = theta_next;
        u = u_next;
        value = phi(&u)?;
        if it % CHECK_EVERY == 0 {
            let g = grad(&u)?;
            let fw = (vertex_max(&g) - g.dot(&u)).max(0.0);
            best_upper = best_upper.min(value + fw);
            if fw <= tol * value.abs().max(1.0) {
                break;
            }
        }
    }
    let g = grad(&u)?;
    let fw = (vertex_max(&g) - g.dot(&u)).max(0.0);
    Ok(best_upper.min(value + fw))
}
