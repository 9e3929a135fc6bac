//! Monte-Carlo scenarios, the real-data workflow, and their CSV/SVG output.
//!
//! Every replication derives its seed from `(base_seed, scenario, sweep value,
//! replication)` only. All methods therefore see the same datasets and, where
//! they share a release, the same client noise.

mod output;
mod realdata;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{fed_dp_oja, OjaConfig};
use crate::client::{ClientConfig, ClientState};
use crate::dp_mechanism::PrivacyBudget;
use crate::error::{Error, Result};
use crate::seed::{derive_path, derive_seed, rng_from_seed};
use crate::server::{aggregate_reference, equal_weights, ClientParams, ModelConstants, Server, ServerConfig, WeightScheme};
use crate::spectral::sample_covariance;
use crate::spiked_model::{covariance_matrix, projection_distance, sample, Dataset, SpikedModel};

pub use output::{mean_series, read_records, render_svg, write_records, Series, CSV_HEADER};
pub use realdata::{estimate_plugins, run_realdata, PluginConfig, PluginEstimate, RealdataReport, RealdataSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PrivacyUtility,
    VaryClients,
    FixedTotal,
    Heterogeneous,
    Realdata,
}

impl Scenario {
    pub const SIMULATED: [Scenario; 4] =
        [Scenario::PrivacyUtility, Scenario::VaryClients, Scenario::FixedTotal, Scenario::Heterogeneous];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::PrivacyUtility => "privacy_utility",
            Scenario::VaryClients => "vary_clients",
            Scenario::FixedTotal => "fixed_total",
            Scenario::Heterogeneous => "heterogeneous",
            Scenario::Realdata => "realdata",
        }
    }

    fn sweep_label(self) -> &'static str {
        match self {
            Scenario::PrivacyUtility => "epsilon",
            Scenario::VaryClients | Scenario::FixedTotal => "clients",
            Scenario::Heterogeneous => "base sample size",
            Scenario::Realdata => "split",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Scenario::PrivacyUtility, Scenario::VaryClients, Scenario::FixedTotal, Scenario::Heterogeneous, Scenario::Realdata]
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Spec(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Optimally weighted aggregation of private projectors.
    Fedspike,
    /// Equal-weight aggregation of the same private projectors.
    Equal,
    /// Top-r eigenspace of the equal-weight sum of the raw noisy projectors.
    Reference,
    /// Federated private Oja iteration.
    Oja,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fedspike, Method::Equal, Method::Reference, Method::Oja];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fedspike => "fedspike",
            Method::Equal => "equal",
            Method::Reference => "reference",
            Method::Oja => "oja",
        }
    }

    /// Whether the method also produces a covariance estimate.
    pub fn estimates_covariance(self) -> bool {
        matches!(self, Method::Fedspike | Method::Equal)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Spec(format!("unknown method `{s}`")))
    }
}

/// A group of equally sized clients in the heterogeneous layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientGroup {
    pub count: usize,
    /// Client size as a multiple of the sweep's base sample size.
    pub size_factor: usize,
}

/// How clients are laid out at each sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientLayout {
    /// `clients` clients of size `n`; one sweep point per ε.
    EpsilonSweep { clients: usize, n: usize, delta: f64, epsilons: Vec<f64> },
    /// Clients of size `n`; one sweep point per client count.
    ClientCountSweep { n: usize, epsilon: f64, delta: f64, counts: Vec<usize> },
    /// `total` samples split evenly; one sweep point per client count.
    FixedTotalSweep { total: usize, epsilon: f64, delta: f64, counts: Vec<usize> },
    /// Groups of clients with sizes `size_factor × base`; one sweep point per
    /// base size. Budgets are drawn uniformly per client and replication.
    Heterogeneous {
        groups: Vec<ClientGroup>,
        base_sizes: Vec<usize>,
        epsilon_range: (f64, f64),
        delta_range: (f64, f64),
    },
    /// Fixed split of a single data matrix.
    Split { sizes: Vec<usize>, epsilon: f64, delta: f64 },
}

#[derive(Debug, Clone, Copy)]
enum BudgetRule {
    Fixed(PrivacyBudget),
    Uniform { epsilon: (f64, f64), delta: (f64, f64) },
}

#[derive(Debug, Clone)]
struct SweepPoint {
    value: f64,
    clients: Vec<(usize, BudgetRule)>,
}

/// Declarative description of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub p: usize,
    pub r: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub layout: ClientLayout,
    pub replications: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub rate_proportional_weights: bool,
    /// Oja settings; defaults to [`OjaConfig::for_model`].
    #[serde(default)]
    pub oja: Option<OjaConfig>,
}

impl ExperimentSpec {
    /// Simulation settings with `p = 50`, `r = 1`, `λ = 10`, `σ² = 1` and 50 replications.
    pub fn standard(scenario: Scenario) -> Self {
        let tenths = |k: usize| (1..=k).map(|i| i as f64 / 10.0).collect::<Vec<_>>();
        let layout = match scenario {
            Scenario::PrivacyUtility => ClientLayout::EpsilonSweep { clients: 10, n: 10_000, delta: 0.1, epsilons: tenths(10) },
            Scenario::VaryClients => {
                ClientLayout::ClientCountSweep { n: 1000, epsilon: 0.5, delta: 0.1, counts: (1..=10).map(|i| 10 * i).collect() }
            }
            Scenario::FixedTotal => {
                ClientLayout::FixedTotalSweep { total: 100_000, epsilon: 0.5, delta: 0.1, counts: vec![10, 20, 25, 50] }
            }
            Scenario::Heterogeneous => ClientLayout::Heterogeneous {
                groups: vec![ClientGroup { count: 5, size_factor: 2 }, ClientGroup { count: 5, size_factor: 20 }],
                base_sizes: (1..=10).map(|i| 100 * i).collect(),
                epsilon_range: (0.1, 0.3),
                delta_range: (0.1, 0.2),
            },
            Scenario::Realdata => ClientLayout::Split { sizes: vec![130, 51], epsilon: 0.4, delta: 0.1 },
        };
        let (p, r) = if scenario == Scenario::Realdata { (251, 5) } else { (50, 1) };
        Self {
            scenario,
            p,
            r,
            lambda: 10.0,
            sigma2: 1.0,
            layout,
            replications: 50,
            base_seed: 0,
            methods: vec![Method::Fedspike, Method::Equal, Method::Reference, Method::Oja],
            rate_proportional_weights: false,
            oja: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Spec("replications must be at least 1".into()));
        }
        if self.r == 0 || self.r > self.p {
            return Err(Error::Spec(format!("rank {} is not in [1, {}]", self.r, self.p)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite() && self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Spec("lambda and sigma2 must be positive and finite".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Spec("at least one method is required".into()));
        }
        let matches = matches!(
            (self.scenario, &self.layout),
            (Scenario::PrivacyUtility, ClientLayout::EpsilonSweep { .. })
                | (Scenario::VaryClients, ClientLayout::ClientCountSweep { .. })
                | (Scenario::FixedTotal, ClientLayout::FixedTotalSweep { .. })
                | (Scenario::Heterogeneous, ClientLayout::Heterogeneous { .. })
                | (Scenario::Realdata, ClientLayout::Split { .. })
        );
        if !matches {
            return Err(Error::Spec(format!("layout does not fit scenario {}", self.scenario)));
        }
        if let Some(oja) = &self.oja {
            oja.validate().map_err(|e| Error::Spec(e.to_string()))?;
        }
        let points = self.sweep_points()?;
        if points.is_empty() {
            return Err(Error::Spec("layout has no sweep points".into()));
        }
        let min_n = self.r.max(2);
        for point in &points {
            if point.clients.is_empty() {
                return Err(Error::Spec(format!("sweep point {} has no clients", point.value)));
            }
            for (n, budget) in &point.clients {
                if *n < min_n {
                    return Err(Error::Spec(format!(
                        "client size {n} at sweep point {} is below the minimum {min_n}",
                        point.value
                    )));
                }
                let corners = match *budget {
                    BudgetRule::Fixed(b) => vec![(b.epsilon, b.delta)],
                    BudgetRule::Uniform { epsilon, delta } => {
                        if epsilon.0 > epsilon.1 || delta.0 > delta.1 {
                            return Err(Error::Spec("budget ranges must be ordered (low, high)".into()));
                        }
                        vec![(epsilon.0, delta.0), (epsilon.1, delta.1)]
                    }
                };
                for (eps, delta) in corners {
                    PrivacyBudget::new(eps, delta).map_err(|e| Error::Spec(e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let fixed = |epsilon: f64, delta: f64| BudgetRule::Fixed(PrivacyBudget { epsilon, delta });
        Ok(match &self.layout {
            ClientLayout::EpsilonSweep { clients, n, delta, epsilons } => epsilons
                .iter()
                .map(|&eps| SweepPoint { value: eps, clients: vec![(*n, fixed(eps, *delta)); *clients] })
                .collect(),
            ClientLayout::ClientCountSweep { n, epsilon, delta, counts } => counts
                .iter()
                .map(|&m| SweepPoint { value: m as f64, clients: vec![(*n, fixed(*epsilon, *delta)); m] })
                .collect(),
            ClientLayout::FixedTotalSweep { total, epsilon, delta, counts } => counts
                .iter()
                .map(|&m| {
                    if m == 0 || total % m != 0 {
                        return Err(Error::Spec(format!("total {total} does not split evenly over {m} clients")));
                    }
                    Ok(SweepPoint { value: m as f64, clients: vec![(total / m, fixed(*epsilon, *delta)); m] })
                })
                .collect::<Result<_>>()?,
            ClientLayout::Heterogeneous { groups, base_sizes, epsilon_range, delta_range } => {
                let rule = BudgetRule::Uniform { epsilon: *epsilon_range, delta: *delta_range };
                base_sizes
                    .iter()
                    .map(|&base| SweepPoint {
                        value: base as f64,
                        clients: groups
                            .iter()
                            .flat_map(|g| std::iter::repeat_n((g.size_factor * base, rule), g.count))
                            .collect(),
                    })
                    .collect()
            }
            ClientLayout::Split { .. } => {
                return Err(Error::Spec("the realdata scenario runs through `run_realdata`".into()))
            }
        })
    }

    fn oja_config(&self) -> OjaConfig {
        self.oja.clone().unwrap_or_else(|| OjaConfig::for_model(self.p, self.r, self.lambda, self.sigma2))
    }

    /// Seed of replication `rep` at a sweep point; independent of the method set.
    pub fn replication_seed(&self, sweep_value: f64, rep: usize) -> u64 {
        derive_path(
            self.base_seed,
            &[self.scenario.as_str(), &format!("sweep.{:016x}", sweep_value.to_bits()), &format!("rep.{rep}")],
        )
    }
}

/// Metrics of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub method: Method,
    pub sweep_value: f64,
    pub replication: usize,
    /// `‖ÛÛᵀ − UUᵀ‖_F`.
    pub projection_error: f64,
    /// `‖Σ̂ − Σ‖_F`, for methods that estimate the covariance.
    pub cov_frobenius_error: Option<f64>,
    pub wall_ms: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub records: Vec<RunRecord>,
    /// SHA-256 over the client datasets each record was computed from.
    pub input_digests: Vec<[u8; 32]>,
}

struct Replication {
    truth: SpikedModel,
    sigma: DMatrix<f64>,
    datasets: Vec<Dataset>,
    states: Vec<ClientState>,
    digest: [u8; 32],
}

fn client_id(j: usize) -> String {
    format!("client-{j:04}")
}

fn prepare(spec: &ExperimentSpec, point: &SweepPoint, seed: u64, keep_data: bool) -> Result<Replication> {
    let truth = SpikedModel::with_random_basis(spec.p, vec![spec.lambda; spec.r], spec.sigma2, derive_seed(seed, "basis"))?;
    let sigma = covariance_matrix(&truth);
    let mut hasher = Sha256::new();
    let mut datasets = Vec::new();
    let mut states = Vec::with_capacity(point.clients.len());
    for (j, (n, rule)) in point.clients.iter().enumerate() {
        let budget = match *rule {
            BudgetRule::Fixed(b) => b,
            BudgetRule::Uniform { epsilon, delta } => {
                let mut rng = rng_from_seed(derive_seed(seed, &format!("client.{j}.budget")));
                let eps = if epsilon.0 < epsilon.1 { rng.random_range(epsilon.0..epsilon.1) } else { epsilon.0 };
                let del = if delta.0 < delta.1 { rng.random_range(delta.0..delta.1) } else { delta.0 };
                PrivacyBudget::new(eps, del)?
            }
        };
        let data = sample(&truth, *n, derive_seed(seed, &format!("client.{j}.data")))?;
        hasher.update(data.fingerprint());
        let cfg = ClientConfig {
            client_id: client_id(j),
            budget,
            rank_r: spec.r,
            lambda_plugin: spec.lambda,
            sigma2_plugin: spec.sigma2,
            seed: derive_seed(seed, &format!("client.{j}.noise")),
            report_weight: false,
        };
        states.push(ClientState::from_covariance(sample_covariance(&data), *n, cfg)?);
        if keep_data {
            datasets.push(data);
        }
    }
    Ok(Replication { truth, sigma, datasets, states, digest: hasher.finalize().into() })
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Estimate {
    u_hat: DMatrix<f64>,
    sigma_hat: Option<DMatrix<f64>>,
    wall_ms: f64,
}

fn run_weighted(spec: &ExperimentSpec, rep: &Replication, releases: &[crate::protocol::ProjectorMessage], scheme: WeightScheme) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let server = Server::new(ServerConfig {
        model: ModelConstants { p: spec.p, r: spec.r, lambda: spec.lambda, sigma2: spec.sigma2 },
        scheme,
        rate_proportional_weights: spec.rate_proportional_weights,
        psd_clip: false,
    })?;
    let agg = server.aggregate(releases)?;
    let eig = rep.states.iter().map(|s| s.private_eigenvalues(&agg.u_hat)).collect::<Result<Vec<_>>>()?;
    let params: Vec<(String, ClientParams)> = rep
        .states
        .iter()
        .map(|s| (s.config().client_id.clone(), ClientParams::new(s.n(), s.config().budget)))
        .collect();
    let sigma_hat = server.assemble(&agg, &params, &eig)?;
    Ok((agg.u_hat, sigma_hat))
}

fn run_methods(spec: &ExperimentSpec, rep: &Replication, seed: u64) -> Result<Vec<(Method, Estimate)>> {
    let mut releases: Option<(Vec<crate::protocol::ProjectorMessage>, f64)> = None;
    let mut out = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let estimate = match method {
            Method::Fedspike | Method::Equal => {
                if releases.is_none() {
                    let start = Instant::now();
                    let msgs = rep.states.iter().map(|s| s.private_projector()).collect::<Result<Vec<_>>>()?;
                    releases = Some((msgs, ms_since(start)));
                }
                let (msgs, release_ms) = releases.as_ref().expect("releases computed above");
                let scheme = if method == Method::Fedspike { WeightScheme::Optimal } else { WeightScheme::Equal };
                let start = Instant::now();
                let (u_hat, sigma_hat) = run_weighted(spec, rep, msgs, scheme)?;
                Estimate { u_hat, sigma_hat: Some(sigma_hat), wall_ms: release_ms + ms_since(start) }
            }
            Method::Reference => {
                let start = Instant::now();
                let raw = rep.states.iter().map(|s| s.noisy_projector()).collect::<Result<Vec<_>>>()?;
                let u_hat = aggregate_reference(&raw, &equal_weights(raw.len())?, spec.r)?;
                Estimate { u_hat, sigma_hat: None, wall_ms: ms_since(start) }
            }
            Method::Oja => {
                let start = Instant::now();
                let budgets: Vec<PrivacyBudget> = rep.states.iter().map(|s| s.config().budget).collect();
                let u_hat = fed_dp_oja(&rep.datasets, &spec.oja_config(), &budgets, derive_seed(seed, "oja"))?;
                Estimate { u_hat, sigma_hat: None, wall_ms: ms_since(start) }
            }
        };
        out.push((method, estimate));
    }
    Ok(out)
}

/// Runs every (sweep point, replication, method) of a simulated scenario.
///
/// Records are ordered by sweep point, then replication, then method in the
/// order given by the spec.
pub fn run_scenario(spec: &ExperimentSpec) -> Result<ScenarioOutput> {
    spec.validate()?;
    let points = spec.sweep_points()?;
    let keep_data = spec.methods.contains(&Method::Oja);
    let mut records = Vec::new();
    let mut input_digests = Vec::new();
    for point in &points {
        for k in 0..spec.replications {
            let seed = spec.replication_seed(point.value, k);
            let rep = prepare(spec, point, seed, keep_data)?;
            for (method, est) in run_methods(spec, &rep, seed)? {
                let cov_frobenius_error = match &est.sigma_hat {
                    Some(s) => Some((s - &rep.sigma).norm()),
                    None => None,
                };
                records.push(RunRecord {
                    scenario: spec.scenario,
                    method,
                    sweep_value: point.value,
                    replication: k,
                    projection_error: projection_distance(&est.u_hat, rep.truth.basis())?,
                    cov_frobenius_error,
                    wall_ms: est.wall_ms,
                    seed,
                });
                input_digests.push(rep.digest);
            }
        }
        log::info!("{}: finished sweep point {}", spec.scenario, point.value);
    }
    Ok(ScenarioOutput { records, input_digests })
}

/// Runs a scenario and writes `{scenario}.csv` and, optionally, `{scenario}.svg` into `dir`.
pub fn run_scenario_to_dir(spec: &ExperimentSpec, dir: &std::path::Path, plot: bool) -> Result<ScenarioOutput> {
    let out = run_scenario(spec)?;
    std::fs::create_dir_all(dir)?;
    write_records(dir.join(format!("{}.csv", spec.scenario)), &out.records)?;
    if plot {
        let series = mean_series(&out.records);
        let svg = render_svg(
            &format!("{} ({} replications)", spec.scenario, spec.replications),
            spec.scenario.sweep_label(),
            "mean projection error",
            &series,
        );
        std::fs::write(dir.join(format!("{}.svg", spec.scenario)), svg)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(scenario: Scenario) -> ExperimentSpec {
        let mut spec = ExperimentSpec::standard(scenario);
        spec.p = 10;
        spec.replications = 2;
        spec.layout = match spec.layout {
            ClientLayout::EpsilonSweep { delta, .. } => {
                ClientLayout::EpsilonSweep { clients: 3, n: 200, delta, epsilons: vec![0.5, 1.0] }
            }
            ClientLayout::ClientCountSweep { epsilon, delta, .. } => {
                ClientLayout::ClientCountSweep { n: 100, epsilon, delta, counts: vec![2, 4] }
            }
            ClientLayout::FixedTotalSweep { epsilon, delta, .. } => {
                ClientLayout::FixedTotalSweep { total: 600, epsilon, delta, counts: vec![2, 3] }
            }
            ClientLayout::Heterogeneous { groups, epsilon_range, delta_range, .. } => {
                ClientLayout::Heterogeneous { groups, base_sizes: vec![10, 20], epsilon_range, delta_range }
            }
            split => split,
        };
        spec
    }

    #[test]
    fn record_counts_and_ordering() {
        for scenario in Scenario::SIMULATED {
            let spec = tiny(scenario);
            let out = run_scenario(&spec).unwrap();
            assert_eq!(out.records.len(), 2 * 2 * 4, "{scenario}");
            let methods: Vec<Method> = out.records[..4].iter().map(|r| r.method).collect();
            assert_eq!(methods, spec.methods);
            for rec in &out.records {
                assert!(rec.projection_error >= 0.0 && rec.wall_ms >= 0.0);
                assert_eq!(rec.cov_frobenius_error.is_some(), rec.method.estimates_covariance());
            }
        }
    }

    #[test]
    fn paired_data_does_not_depend_on_method_set() {
        let spec = tiny(Scenario::Heterogeneous);
        let all = run_scenario(&spec).unwrap();
        let mut only = spec.clone();
        only.methods = vec![Method::Reference];
        let single = run_scenario(&only).unwrap();
        for (chunk, (rec, digest)) in all.input_digests.chunks(4).zip(single.records.iter().zip(&single.input_digests)) {
            assert!(chunk.iter().all(|d| d == digest));
            let same = all.records.iter().find(|r| {
                r.method == Method::Reference && r.sweep_value == rec.sweep_value && r.replication == rec.replication
            });
            assert_eq!(same.unwrap().projection_error, rec.projection_error);
        }
    }

    #[test]
    fn sweep_subset_reproduces_records() {
        let spec = tiny(Scenario::PrivacyUtility);
        let full = run_scenario(&spec).unwrap();
        let mut sub = spec.clone();
        sub.layout = ClientLayout::EpsilonSweep { clients: 3, n: 200, delta: 0.1, epsilons: vec![1.0] };
        let part = run_scenario(&sub).unwrap();
        let tail: Vec<f64> = full.records.iter().filter(|r| r.sweep_value == 1.0).map(|r| r.projection_error).collect();
        let got: Vec<f64> = part.records.iter().map(|r| r.projection_error).collect();
        assert_eq!(tail, got);
    }

    #[test]
    fn infeasible_layouts_are_rejected() {
        let mut spec = tiny(Scenario::VaryClients);
        spec.r = 3;
        spec.layout = ClientLayout::ClientCountSweep { n: 2, epsilon: 0.5, delta: 0.1, counts: vec![2] };
        assert!(matches!(run_scenario(&spec), Err(Error::Spec(_))));

        let mut spec = tiny(Scenario::FixedTotal);
        spec.layout = ClientLayout::FixedTotalSweep { total: 100, epsilon: 0.5, delta: 0.1, counts: vec![3] };
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));

        let mut spec = tiny(Scenario::PrivacyUtility);
        spec.layout = ClientLayout::ClientCountSweep { n: 100, epsilon: 0.5, delta: 0.1, counts: vec![2] };
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));

        let mut spec = tiny(Scenario::PrivacyUtility);
        spec.replications = 0;
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));

        assert!(matches!(run_scenario(&ExperimentSpec::standard(Scenario::Realdata)), Err(Error::Spec(_))));
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        for s in Scenario::SIMULATED {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        assert!("pca".parse::<Method>().is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = ExperimentSpec::standard(Scenario::Heterogeneous);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&json).unwrap(), spec);
    }
}
