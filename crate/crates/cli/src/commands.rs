//! Bodies of the subcommands.

use std::path::Path;

use hydronet_core::hydraulics::{headloss, node_imbalance};
use hydronet_core::topo::graph_diameter;
use hydronet_core::WaterNetwork;
use hydronet_io::checkpoint::{load_checkpoint, save_checkpoint};
use hydronet_io::dataset::{load_dataset, save_dataset};
use hydronet_io::inp::{parse_inp, ParsedInp};
use hydronet_io::scenario::{generate_scenarios_with, ScenarioConfig, ScenarioSet};
use hydronet_model::trainer::TrainConfig;
use hydronet_model::{
    benchmark, evaluate, fixpoint_apply, floor_constant, EmulatorConfig, Metric, ModelParams,
};
use hydronet_solver::{solve_steady_state, SolverConfig};

use crate::csvio;
use crate::{BenchArgs, CliError, EvalArgs, FixpointArgs, GenArgs, ParseArgs, SolveArgs, TrainArgs};

fn load_network(path: &Path) -> Result<ParsedInp, CliError> {
    let text = csvio::read_text(path)?;
    Ok(parse_inp(&text)?)
}

/// Dataset from a file (hash-checked against the network) or generated in
/// process from the file's demand profile.
fn scenario_data(
    parsed: &ParsedInp,
    dataset: Option<&Path>,
    config: &ScenarioConfig,
) -> Result<ScenarioSet, CliError> {
    match dataset {
        Some(path) => Ok(load_dataset(path, &parsed.network)?),
        None => Ok(generate_scenarios_with(
            &parsed.network,
            parsed.demand_basis().as_ref(),
            config,
        )),
    }
}

pub fn parse(args: &ParseArgs) -> Result<(), CliError> {
    let parsed = load_network(&args.network)?;
    let net = &parsed.network;
    let diameter = graph_diameter(net)?;
    let summary = serde_json::json!({
        "nodes": net.n_nodes(),
        "reservoirs": net.reservoirs().len(),
        "pipes": net.n_pipes(),
        "directed_edges": net.n_edges(),
        "graph_diameter": diameter,
        "flow_units": format!("{:?}", parsed.flow_units).to_lowercase(),
        "warnings": parsed.warnings,
    });
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    csvio::emit(args.out.as_deref(), &text)
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let parsed = load_network(&args.network)?;
    let net = &parsed.network;
    let demands = match &args.demands {
        Some(path) => csvio::read_demands(path, net)?,
        None => parsed
            .base_demands
            .iter()
            .map(|d| d * args.demand_multiplier)
            .collect(),
    };
    let state = solve_steady_state(net, &demands, &SolverConfig::default())?;

    let imbalance = node_imbalance(net, &state)?;
    let worst_imbalance = imbalance.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut worst_law = 0.0f64;
    for (e, edge) in net.edges().iter().enumerate() {
        let drop = state.heads[edge.from] - state.heads[edge.to];
        worst_law = worst_law.max((drop - headloss(net.edge_resistance(e), state.flows[e])).abs());
    }
    let report = format!(
        "solved {} nodes, {} pipes (physical: {})\n\
         max node imbalance   {worst_imbalance:.3e} m3/h\n\
         max edge law residual {worst_law:.3e} m\n",
        net.n_nodes(),
        net.n_pipes(),
        state.physical,
    );
    // The report goes wherever the CSV does not.
    if args.out.is_some() {
        print!("{report}");
    } else {
        eprint!("{report}");
    }

    csvio::emit(
        args.out.as_deref(),
        &csvio::node_csv(net, &state.heads, &state.demands),
    )?;
    if let Some(path) = &args.flows_out {
        csvio::write_text(path, &csvio::pipe_csv(net, &state.flows))?;
    }
    Ok(())
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let parsed = load_network(&args.network)?;
    let config = ScenarioConfig {
        n_scenarios: args.scenarios,
        days: args.days,
        seed: args.seed,
        diameter_sigma: args.diameter_sigma,
        demand_noise_sigma: args.demand_sigma,
        ..ScenarioConfig::default()
    };
    let set = generate_scenarios_with(&parsed.network, parsed.demand_basis().as_ref(), &config);
    save_dataset(&args.out, &set)?;
    println!(
        "wrote {}: {} scenarios x {} steps ({} samples)",
        args.out.display(),
        set.scenarios.len(),
        set.time_steps(),
        set.scenarios.len() * set.time_steps(),
    );
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let parsed = load_network(&args.network)?;
    let data = scenario_data(
        &parsed,
        args.dataset.as_deref(),
        &ScenarioConfig {
            n_scenarios: args.scenarios,
            days: args.days,
            seed: args.seed,
            ..ScenarioConfig::default()
        },
    )?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        k_range: (args.k_min, args.k_max),
        rho: args.rho,
        delta: args.delta,
        batch_size: args.batch_size,
        epoch_samples: args.epoch_samples,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let emulator = EmulatorConfig::new(args.latent_dim, args.layers);
    let outcome = hydronet_model::train(&data, &emulator, &cfg)?;
    save_checkpoint(&args.out, &outcome.params.to_checkpoint())?;
    if let Some(path) = &args.loss_out {
        csvio::write_text(path, &csvio::loss_csv(&outcome.history))?;
    }
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "trained {} epochs on {} scenarios x {} steps; final loss {:.6e}; checkpoint {}",
        args.epochs,
        data.scenarios.len(),
        data.time_steps(),
        last.loss,
        args.out.display(),
    );
    Ok(())
}

fn metric_line(label: &str, metric: &Metric) -> String {
    format!(
        "{label:<22}{:9.4}% ± {:.4}%   trimmed {:.4}% ± {:.4}%\n",
        metric.full.mean * 100.0,
        metric.full.std * 100.0,
        metric.trimmed.mean * 100.0,
        metric.trimmed.std * 100.0,
    )
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let parsed = load_network(&args.network)?;
    let params = ModelParams::from_checkpoint(&load_checkpoint(&args.checkpoint)?)?;
    let data = scenario_data(
        &parsed,
        args.dataset.as_deref(),
        &ScenarioConfig {
            n_scenarios: args.scenarios,
            days: args.days,
            seed: args.seed,
            ..ScenarioConfig::default()
        },
    )?;
    let cfg = TrainConfig {
        eval_iterations: args.iterations,
        ..TrainConfig::default()
    };
    let report = evaluate(&data, &params, &cfg)?;
    print!(
        "samples               {}\n{}{}{}\
         conformity C          {}   trimmed {}\n\
         emulator s/sample     {:.6}\n\
         oracle s/sample       {:.6}\n",
        report.samples,
        metric_line("demand MRAE", &report.demand_mrae),
        metric_line("head MRAE", &report.head_mrae),
        metric_line("flow MRAE", &report.flow_mrae),
        report.conformity,
        report.conformity_trimmed,
        report.emulator_seconds_per_sample,
        report.oracle_seconds_per_sample,
    );
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let parsed = load_network(&args.network)?;
    let params = match &args.checkpoint {
        Some(path) => ModelParams::from_checkpoint(&load_checkpoint(path)?)?,
        None => ModelParams::seeded(
            &EmulatorConfig::new(args.latent_dim, args.layers),
            args.seed,
        ),
    };
    let data = scenario_data(
        &parsed,
        args.dataset.as_deref(),
        &ScenarioConfig {
            n_scenarios: args.scenarios,
            days: args.days,
            seed: args.seed,
            ..ScenarioConfig::default()
        },
    )?;
    let cfg = TrainConfig {
        eval_iterations: args.iterations,
        ..TrainConfig::default()
    };
    let rows = benchmark(&data, &params, &cfg, &args.counts)?;
    csvio::emit(args.out.as_deref(), &csvio::bench_csv(&rows))
}

pub fn fixpoint(args: &FixpointArgs) -> Result<(), CliError> {
    let parsed = load_network(&args.network)?;
    let net: &WaterNetwork = &parsed.network;
    let flows = match &args.flows {
        Some(path) => csvio::read_flows(path, net)?,
        None => vec![0.0; net.n_edges()],
    };
    let floor = floor_constant(net, &flows);
    let solution = fixpoint_apply(net, &flows, args.zeta).map_err(CliError::from)?;
    let lowest = solution.heads.iter().cloned().fold(f64::INFINITY, f64::min);
    let highest = solution
        .heads
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let report = format!(
        "iterations {} (converged: {})\nfloor {floor}\nheads in [{lowest}, {highest}]\n",
        solution.trace.iterations, solution.trace.converged,
    );
    if args.out.is_some() {
        print!("{report}");
    } else {
        eprint!("{report}");
    }
    csvio::emit(
        args.out.as_deref(),
        &csvio::node_csv(net, &solution.heads, &solution.demands),
    )?;
    if let Some(path) = &args.flows_out {
        csvio::write_text(path, &csvio::pipe_csv(net, &solution.flows))?;
    }
    Ok(())
}
