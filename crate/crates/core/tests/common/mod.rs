//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use num_rational::BigRational;

pub fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn frac(num: i64, den: i64) -> BigRational {
    q(num as f64) / q(den as f64)
}

fn term(num: BigRational, den: &BigRational) -> BigRational {
    if *den == q(0.0) {
        q(0.0)
    } else {
        num / den
    }
}

/// Raw `h`, `k` in exact arithmetic; terms with a vanishing column count as 0.
pub fn hk_exact(p: [&BigRational; 4], a: &BigRational, b: &BigRational) -> (BigRational, BigRational) {
    let [p11, p12, p21, p22] = p;
    let c1 = p11 + p21;
    let c2 = p12 + p22;
    let h = -(b * (term(p11 * p11 + p21 * p11, &c1) + term(p12 * p12 + p12 * p22, &c2)))
        - a * (term(p21 * p21 + p21 * p11, &c1) + term(p22 * p22 + p12 * p22, &c2));
    let two = q(2.0);
    let k = b * b * (term(p11 * p11, &c1) + term(p12 * p12, &c2))
        + a * a * (term(p21 * p21, &c1) + term(p22 * p22, &c2))
        + two * a * b * (term(p11 * p21, &c1) + term(p12 * p22, &c2));
    (h, k)
}

pub fn margin_exact(p: [&BigRational; 4], a: &BigRational, b: &BigRational) -> BigRational {
    let (h, k) = hk_exact(p, a, b);
    let lo = &h * a + &k;
    let hi = &h * b + &k;
    if lo < hi {
        lo
    } else {
        hi
    }
}

pub fn close(x: &BigRational, y: f64, tol: f64) -> bool {
    let d = x - q(y);
    d <= q(tol) && -d <= q(tol)
}

/// Minimum-cost perfect matching (Hungarian method, O(n³)).
pub fn assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Squared `W2` between uniform empirical measures by enumerating couplings:
/// all permutations for equal sizes, otherwise the assignment problem on
/// `lcm(m, n)` replicated atoms, whose optimum equals the transport LP.
pub fn brute_w2_squared(x: &[f64], y: &[f64]) -> f64 {
    let (m, n) = (x.len(), y.len());
    if m == n {
        return permutations(n)
            .iter()
            .map(|p| (0..n).map(|i| (x[i] - y[p[i]]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / n as f64;
    }
    let l = m / gcd(m, n) * n;
    let xs: Vec<f64> = (0..l).map(|i| x[i / (l / m)]).collect();
    let ys: Vec<f64> = (0..l).map(|i| y[i / (l / n)]).collect();
    let cost: Vec<Vec<f64>> = xs.iter().map(|a| ys.iter().map(|b| (a - b).powi(2)).collect()).collect();
    assignment(&cost) / l as f64
}

/// Payoff of player 1 in the bang-bang game when the other players follow
/// recommendations drawn i.i.d. given the announced flow, computed by
/// enumerating every recommendation profile. `dev = Some(m)` makes player 1
/// play the constant `m`; `None` lets it follow its own recommendation.
pub fn brute_payoff(p: [f64; 4], a: f64, b: f64, c: f64, t: f64, n: usize, dev: Option<f64>) -> f64 {
    let [p11, p12, p21, p22] = p;
    // Players whose recommendation is enumerated.
    let drawn = if dev.is_some() { n - 1 } else { n };
    let mut total = 0.0;
    for (mass, plus) in [(p11 + p21, p11), (p12 + p22, p12)] {
        if mass <= 0.0 {
            continue;
        }
        let w = plus / mass;
        for profile in 0..(1usize << drawn) {
            let mut prob = mass;
            let mut u: Vec<f64> = Vec::with_capacity(n);
            if let Some(m) = dev {
                u.push(m);
            }
            for i in 0..drawn {
                let is_b = profile >> i & 1 == 1;
                prob *= if is_b { w } else { 1.0 - w };
                u.push(if is_b { b } else { a });
            }
            if prob == 0.0 {
                continue;
            }
            // E[X_1 X_k] = T²·u_1·u_k + T·[k = 1] with X_k = T·u_k + W_k.
            let s: f64 = u.iter().map(|uk| t * t * u[0] * uk).sum::<f64>() + t;
            total += prob * c * s / n as f64;
        }
    }
    total
}
