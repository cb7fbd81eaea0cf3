use devtox::data::{simulate_sim2, Sim2Config};
use devtox::distributions::QuadratureRule;
use devtox::inference::{curve_draws, Endpoint};
use devtox::mcmc::{diagnostics, fit, McmcConfig};
use devtox::model::{elicit_sigma2_prior, Hyperparameters, ModelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = Sim2Config::default();
    let rule = QuadratureRule::shared();
    let (data, _, _) = simulate_sim2(&cfg, &mut ChaCha8Rng::seed_from_u64(2003)).unwrap();
    let mut hyper = Hyperparameters::defaults(data.max_dose());
    let (a, b) = elicit_sigma2_prior(1.0 / 3.0, 3.0).unwrap();
    hyper.a_sigma = a;
    hyper.b_sigma = b;
    for (n_iter, burn) in [(10_000usize, 5_000usize), (30_000, 20_000)] {
        let mut bands = Vec::new();
        for (k, name) in ["cw-bin", "cw-lnb", "gen-bin", "gen-lnb"].iter().enumerate() {
            let spec = ModelSpec::from_name(name, 20).unwrap();
            let config = McmcConfig { n_iter, burn_in: burn, thin: 2, seed: 6200 + k as u64, n_chains: 1 };
            let chain = fit(&spec, &data, &hyper, &config).unwrap();
            if name.ends_with("lnb") {
                let diag = diagnostics(&chain, 2.5, rule).unwrap();
                for s in &diag.scalars {
                    if s.name.starts_with("sigma2") {
                        println!("  [{n_iter}] {name} {}: ESS {:.0} rhat {:.3}", s.name, s.ess, s.rhat);
                    }
                }
            }
            bands.push(curve_draws(&chain, &cfg.doses, rule).unwrap());
        }
        for (bin, lnb, tag) in [(0usize, 1usize, "cw"), (2, 3, "gen")] {
            for endpoint in Endpoint::ALL {
                let wb: Vec<f64> = bands[bin].credible_band(endpoint, 0.95).iter().map(|(l, h)| h - l).collect();
                let wl: Vec<f64> = bands[lnb].credible_band(endpoint, 0.95).iter().map(|(l, h)| h - l).collect();
                let worst = wl.iter().zip(&wb).map(|(l, b)| b - l).fold(f64::MIN, f64::max);
                println!("[{n_iter}] {tag} {}: worst (bin - lnb) width = {worst:+.4}", endpoint.name());
            }
        }
    }
}
