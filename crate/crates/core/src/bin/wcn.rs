use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wcn::access::{
    contraction_constant, solve_equilibrium, AccessGameInstance, ApId, PaymentType, Player, UserId,
};
use wcn::expectation::ExpectationMode;
use wcn::membership::Role;
use wcn::operator::sweep;
use wcn::report::{fmt_num, phase_csv, provenance_line, surface_csv};
use wcn::scenario::{load_scenario, parse_grid, phase_plot, Scenario};

#[derive(Parser)]
#[command(name = "wcn", version, about = "Equilibria and operator revenue for Wi-Fi community networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Pure,
    Mixed,
    Both,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Expectation mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Monte-Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Smoothing temperature for the mixed solver.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a scenario.
    Validate(Common),
    /// Solve one AP's access game for a given roster.
    AccessEq {
        #[command(flatten)]
        common: Common,
        /// AP number, 1-based.
        #[arg(long)]
        ap: usize,
        /// Comma-separated user ids present at the AP.
        #[arg(long)]
        roster: String,
        /// Comma-separated subscriber ids that are Bills (others are Linus).
        #[arg(long, default_value = "")]
        bills: String,
    },
    /// Pure and/or mixed membership equilibria.
    MembershipEq {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        kind: Kind,
    },
    /// Operator revenue over a (p, delta) grid, as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Price grid a:b:step.
        #[arg(long)]
        p_grid: String,
        /// Revenue-share grid a:b:step.
        #[arg(long)]
        delta_grid: String,
    },
    /// Bill probability of one subscriber over its valuation and home probability, as CSV.
    PhasePlot {
        #[command(flatten)]
        common: Common,
        /// AP number (1-based) of the designated subscriber.
        #[arg(long, default_value_t = 1)]
        ap: usize,
        #[arg(long, default_value = "0:1:0.05")]
        rho_grid: String,
        #[arg(long, default_value = "0:1:0.05")]
        eta_grid: String,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut s = load_scenario(&common.scenario).map_err(|e| Failure::Validation(e.to_string()))?;
    let mode = match common.mode {
        Some(Mode::Exact) => ExpectationMode::Exact,
        Some(Mode::Mc) => ExpectationMode::MonteCarlo,
        None => s.expectation.mode,
    };
    let samples = common.samples.unwrap_or(s.expectation.sample_count);
    if samples == 0 {
        return Err(Failure::Usage("--samples must be >= 1".into()));
    }
    s = s.with_expectation(mode, samples, common.seed.unwrap_or(s.seed));
    if let Some(g) = common.gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Failure::Usage(format!("--gamma must be positive, got {g}")));
        }
        s.solver.gamma = Some(g);
    }
    Ok(s)
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ap_index(s: &Scenario, ap: usize) -> Result<ApId, Failure> {
    let k = s.population.subscriber_count();
    if ap == 0 || ap > k {
        return Err(Failure::Usage(format!("--ap must be between 1 and {k}")));
    }
    Ok(ApId(ap - 1))
}

fn grid(spec: &str) -> Result<Vec<f64>, Failure> {
    parse_grid(spec).map_err(Failure::Usage)
}

fn ids(list: &str) -> Vec<&str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn validate(common: &Common) -> Result<(), Failure> {
    let s = load(common)?;
    let pop = &s.population;
    let aliens = pop.users().iter().filter(|u| u.role == Role::Alien).count();
    let mut out = String::from("valid\n");
    let _ = writeln!(out, "subscribers = {}", pop.subscriber_count());
    let _ = writeln!(out, "aliens = {aliens}");
    let _ = writeln!(out, "time_slots = {}", fmt_num(s.time_slots));
    let prices: Vec<String> = s.pricing.prices().iter().map(|p| fmt_num(*p)).collect();
    let _ = writeln!(out, "prices = {}", prices.join(","));
    let _ = writeln!(out, "delta = {}", fmt_num(s.pricing.delta()));
    let _ = writeln!(out, "seed = {}", s.seed);
    for u in pop.users() {
        let row: Vec<String> = u.mobility.iter().map(|v| fmt_num(*v)).collect();
        let role = match u.role {
            Role::Subscriber => "subscriber",
            Role::Alien => "alien",
        };
        let _ = writeln!(out, "user {} role={role} rho={} mobility={}", u.id, fmt_num(u.rho), row.join(","));
    }
    emit(common, &out)
}

fn access_eq(common: &Common, ap: usize, roster: &str, bills: &str) -> Result<(), Failure> {
    let s = load(common)?;
    let ap = ap_index(&s, ap)?;
    let pop = &s.population;
    let owner = pop.owner(ap).map_err(runtime)?;
    let find = |id: &str| pop.find(id).ok_or_else(|| Failure::Usage(format!("unknown user '{id}'")));
    let bill_ids = ids(bills).into_iter().map(find).collect::<Result<Vec<UserId>, _>>()?;
    let mut players = Vec::new();
    for id in ids(roster) {
        let user = find(id)?;
        let profile = &pop.users()[user.0];
        let payment = match profile.role {
            Role::Alien => PaymentType::Paying,
            Role::Subscriber => PaymentType::for_subscriber(bill_ids.contains(&user)),
        };
        players.push(Player { user, payment, rho: profile.rho });
    }
    let price = s.pricing.prices()[ap.0];
    let instance = AccessGameInstance::new(ap, owner, players, price, s.rate_params)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let eq = solve_equilibrium(&instance, &s.access_config()).map_err(runtime)?;
    if !eq.converged {
        eprintln!("warning: access game did not converge (residual {})", fmt_num(eq.residual));
    }
    let c = contraction_constant(&s.rate_params).map_err(runtime)?;
    let mut out = String::new();
    let _ = writeln!(out, "ap = {}", ap.0 + 1);
    let _ = writeln!(out, "price = {}", fmt_num(price));
    let _ = writeln!(out, "converged = {}", eq.converged);
    let _ = writeln!(out, "iterations = {}", eq.iterations);
    let _ = writeln!(out, "residual = {}", fmt_num(eq.residual));
    let _ = writeln!(out, "contraction_constant = {}", fmt_num(c));
    out.push_str("user,payment,sigma\n");
    for (p, sigma) in instance.players().iter().zip(&eq.profile.sigma) {
        let kind = match p.payment {
            PaymentType::Free => "free",
            PaymentType::Paying => "paying",
        };
        let _ = writeln!(out, "{},{kind},{}", pop.users()[p.user.0].id, fmt_num(*sigma));
    }
    emit(common, &out)
}

fn membership_eq(common: &Common, kind: Kind) -> Result<(), Failure> {
    let s = load(common)?;
    let cache = s.new_cache();
    let game = s.base_game(cache).map_err(runtime)?;
    let gamma = s.gamma_for(&game);
    let mut out = provenance_line("membership-eq", &s, Some(gamma));
    let names: Vec<&str> = s
        .population
        .subscriber_ids()
        .map(|u| s.population.users()[u.0].id.as_str())
        .collect();
    if matches!(kind, Kind::Pure | Kind::Both) {
        let k = names.len();
        if k > s.expectation.exact_population_limit {
            eprintln!("warning: {k} subscribers exceed the exhaustive limit; pure search skipped");
        } else {
            let eqs = game.pure_equilibria().map_err(runtime)?;
            out.push_str("[pure]\n");
            let _ = writeln!(out, "subscribers = {}", names.join(","));
            let _ = writeln!(out, "equilibria = {}", eqs.len());
            for x in eqs {
                let bits: Vec<&str> = x.iter().map(|b| if *b { "1" } else { "0" }).collect();
                let _ = writeln!(out, "x = {}", bits.join(","));
            }
        }
    }
    if matches!(kind, Kind::Mixed | Kind::Both) {
        let eq = game
            .solve_mixed_equilibrium(&s.initial_alpha(), &s.mixed_config(&game))
            .map_err(runtime)?;
        if !eq.converged {
            eprintln!("warning: mixed solver did not converge (residual {})", fmt_num(eq.residual));
        }
        out.push_str("[mixed]\n");
        let _ = writeln!(out, "converged = {}", eq.converged);
        let _ = writeln!(out, "iterations = {}", eq.iterations);
        let _ = writeln!(out, "residual = {}", fmt_num(eq.residual));
        out.push_str("subscriber,alpha,bill_payoff,linus_payoff,converged\n");
        for (i, name) in names.iter().enumerate() {
            let _ = writeln!(
                out,
                "{name},{},{},{},{}",
                fmt_num(eq.alpha[i]),
                fmt_num(eq.bill_payoff[i].mean),
                fmt_num(eq.linus_payoff[i].mean),
                eq.converged
            );
        }
    }
    emit(common, &out)
}

fn run_sweep(common: &Common, p_grid: &str, delta_grid: &str) -> Result<(), Failure> {
    let s = load(common)?;
    let p = grid(p_grid)?;
    let d = grid(delta_grid)?;
    let cache = s.new_cache();
    let surface = sweep(&s, &p, &d, &cache).map_err(|e| Failure::Usage(e.to_string()))?;
    for cell in &surface.cells {
        if let Some(e) = &cell.error {
            eprintln!("warning: cell p={} delta={} failed: {e}", fmt_num(cell.prices[0]), fmt_num(cell.delta));
        } else if !cell.converged {
            eprintln!("warning: cell p={} delta={} did not converge", fmt_num(cell.prices[0]), fmt_num(cell.delta));
        }
    }
    let gamma = s.solver.gamma;
    emit(common, &surface_csv(&surface, &provenance_line("sweep", &s, gamma)))
}

fn run_phase_plot(common: &Common, ap: usize, rho_grid: &str, eta_grid: &str) -> Result<(), Failure> {
    let s = load(common)?;
    let ap = ap_index(&s, ap)?;
    let rho = grid(rho_grid)?;
    let eta = grid(eta_grid)?;
    if eta.iter().any(|e| !(0.0..=1.0).contains(e)) || rho.iter().any(|r| *r < 0.0) {
        return Err(Failure::Usage("eta grid must lie in [0, 1] and rho grid must be nonnegative".into()));
    }
    let owner = s.population.owner(ap).map_err(runtime)?;
    let cells = phase_plot(&s, owner, &rho, &eta).map_err(runtime)?;
    let stalled = cells.iter().filter(|c| !c.converged).count();
    if stalled > 0 {
        eprintln!("warning: {stalled} cells did not converge");
    }
    let gamma = s.gamma_for(&s.base_game(s.new_cache()).map_err(runtime)?);
    emit(common, &phase_csv(&cells, &provenance_line("phase-plot", &s, Some(gamma))))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(common) => validate(&common),
        Command::AccessEq { common, ap, roster, bills } => access_eq(&common, ap, &roster, &bills),
        Command::MembershipEq { common, kind } => membership_eq(&common, kind),
        Command::Sweep { common, p_grid, delta_grid } => run_sweep(&common, &p_grid, &delta_grid),
        Command::PhasePlot { common, ap, rho_grid, eta_grid } => run_phase_plot(&common, ap, &rho_grid, &eta_grid),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
