use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use num_rational::BigRational;
use serde::Serialize;
use sha2::{Digest, Sha256};

use sphere_fraisse::fraisse::{
    amalgamate, grow_chain, no_algebraicity_witnesses, one_point_extension_witness, AmalgamProblem, ExtensionOutcome,
};
use sphere_fraisse::gaussian::{build_model, mixing_experiment, sample, CylinderEvent};
use sphere_fraisse::geometry::{
    chain_length_bound, connect_by_chain, connectedness_witness, solve_theta_for_distance, type_pair,
};
use sphere_fraisse::metric::io::{read_space, space_hash, space_to_json, CertificateFile, CoordsFile, SpaceFile};
use sphere_fraisse::orders::{exact_distribution, full_support_check, order_distribution, uniformity_test};
use sphere_fraisse::rational::{encode_rational, JsonRational};
use sphere_fraisse::rng::{stream, Normals};
use sphere_fraisse::{certify_membership, embed, Membership, ScalarSquared, SpaceDistances};

use crate::config::ExperimentConfig;
use crate::{Cli, Command, Outcome, WitnessKind};

pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_DUMP_SAMPLES: usize = 1_000;
pub const DEFAULT_K_VALUES: [u64; 4] = [2, 4, 8, 16];

/// Common wrapper of every JSON report.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    result: T,
}

struct Ctx {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
}

impl Ctx {
    fn write_report<T: Serialize>(&self, file: &str, result: T) -> Result<PathBuf> {
        let env = Envelope {
            command: self.cfg.command.as_deref().unwrap_or_default(),
            config_hash: &self.hash,
            seed: self.cfg.seed(),
            result,
        };
        self.write_text(file, &(serde_json::to_string_pretty(&env)? + "\n"))
    }

    fn write_text(&self, file: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(file);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn space(&self, i: usize) -> Result<SpaceDistances> {
        let p = self.cfg.input(i)?;
        read_space(p).with_context(|| format!("reading space {}", p.display()))
    }
}

fn parse_rational(s: &str) -> Result<BigRational> {
    s.trim()
        .parse::<BigRational>()
        .map_err(|e| anyhow::anyhow!("bad rational {s:?}: {e}"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = ExperimentConfig::from_cli(cli)?;
    let hash = cfg.hash()?;
    let out = cfg.out();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx { cfg, hash, out };
    match &cli.command {
        Command::Certify { .. } => certify(&ctx),
        Command::Embed { .. } => embed_cmd(&ctx),
        Command::Amalgamate { .. } => amalgamate_cmd(&ctx),
        Command::Grow { .. } => grow(&ctx),
        Command::Witness { .. } => witness(&ctx),
        Command::Sample { .. } => sample_cmd(&ctx),
        Command::Mixing { .. } => mixing(&ctx),
        Command::Orders { .. } => orders(&ctx),
    }
}

fn certify(ctx: &Ctx) -> Result<Outcome> {
    let space = ctx.space(0)?;
    let membership = certify_membership(&space);
    let cert = CertificateFile::new(&space, &membership);
    let path = ctx.write_report("certificate.json", &cert)?;
    match membership {
        Membership::Member(_) => {
            println!("member: {} points certified ({})", space.len(), path.display());
            Ok(Outcome::Positive)
        }
        Membership::NonMember(r) => {
            println!(
                "not a member: pivot {} is {} ({})",
                r.pivot_index,
                r.minor,
                path.display()
            );
            Ok(Outcome::Negative)
        }
    }
}

#[derive(Serialize)]
struct EmbedResult {
    #[serde(flatten)]
    coords: CoordsFile,
    tol: f64,
    max_sq_dist_error: f64,
}

fn embed_cmd(ctx: &Ctx) -> Result<Outcome> {
    let space = ctx.space(0)?;
    let e = embed(&space, ctx.cfg.tol())?;
    let result = EmbedResult {
        coords: CoordsFile::new(space.labels().to_vec(), &e)?,
        tol: ctx.cfg.tol(),
        max_sq_dist_error: e.max_sq_dist_error(&space),
    };
    let path = ctx.write_report("coords.json", &result)?;
    println!(
        "embedded {} points, max squared-distance error {:.3e} ({})",
        space.len(),
        result.max_sq_dist_error,
        path.display()
    );
    Ok(Outcome::Positive)
}

#[derive(Serialize)]
struct AmalgamResult {
    space: SpaceFile,
    space_sha256: String,
    left_embedding: Vec<usize>,
    right_embedding: Vec<usize>,
    pivots: Vec<JsonRational>,
}

fn amalgamate_cmd(ctx: &Ctx) -> Result<Outcome> {
    let (left, right) = (ctx.space(0)?, ctx.space(1)?);
    let problem = AmalgamProblem::new(
        left,
        right,
        ctx.cfg.common_left.clone().unwrap_or_default(),
        ctx.cfg.common_right.clone().unwrap_or_default(),
    )?;
    let a = amalgamate(&problem)?;
    let pivots = a.gram.pd_certificate().unwrap_or_default().iter().map(encode_rational).collect();
    ctx.write_text("amalgam_space.json", &(space_to_json(&a.space) + "\n"))?;
    let path = ctx.write_report(
        "amalgam.json",
        AmalgamResult {
            space: SpaceFile::from_space(&a.space),
            space_sha256: space_hash(&a.space),
            left_embedding: a.left_embedding,
            right_embedding: a.right_embedding,
            pivots,
        },
    )?;
    println!("amalgam of {} points certified ({})", a.space.len(), path.display());
    Ok(Outcome::Positive)
}

fn grow(ctx: &Ctx) -> Result<Outcome> {
    let initial = if ctx.cfg.inputs.is_empty() {
        SpaceDistances::empty()
    } else {
        ctx.space(0)?
    };
    let chain = grow_chain(
        initial,
        ctx.cfg.stages.unwrap_or(3),
        ctx.cfg.per_stage.unwrap_or(1),
        ctx.cfg.seed(),
        ctx.cfg.policy(),
    )?;
    let manifest = chain.write_dir(ctx.out.join("chain"))?;
    let path = ctx.write_report("grow.json", &manifest)?;
    println!(
        "grew {} stages to {} points ({})",
        chain.log.len(),
        chain.stages.last().map_or(0, |s| s.len()),
        path.display()
    );
    Ok(Outcome::Positive)
}

#[derive(Serialize)]
struct ThetaResult {
    epsilon: f64,
    target_sq: JsonRational,
    theta: f64,
    achieved_sq: f64,
    distance_error: f64,
    space: SpaceFile,
    pivots: Vec<JsonRational>,
}

#[derive(Serialize)]
struct ConnectResult {
    phi: f64,
    half_phi: f64,
    sq_to_x: JsonRational,
    sq_to_y: JsonRational,
    angle_to_x: f64,
    angle_to_y: f64,
    chord_bound: f64,
    dist_to_x: f64,
    dist_to_y: f64,
    span_residual: f64,
    attempts: u32,
    space: SpaceFile,
}

#[derive(Serialize)]
struct ChainResult {
    step_sq: JsonRational,
    jumps: usize,
    jump_bound: usize,
    link_sq: Vec<JsonRational>,
    links_certified: bool,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum ExtensionResult {
    Realized { index: usize, space: SpaceFile },
    Unrealizable { pivot_index: usize, minor: JsonRational },
}

#[derive(Serialize)]
struct AlgebraicityEntry {
    index: usize,
    profile: Vec<JsonRational>,
    space_sha256: String,
}

fn witness(ctx: &Ctx) -> Result<Outcome> {
    let Some(kind) = ctx.cfg.witness else {
        bail!("witness kind required (theta, connect, chain, extension, algebraicity)");
    };
    let space = ctx.space(0)?;
    let tol = ctx.cfg.tol();
    let mut normals = Normals::new(stream(ctx.cfg.seed(), 0));
    let policy = ctx.cfg.policy();
    let file = "witness.json";
    match kind {
        WitnessKind::Theta => {
            let Some(target) = &ctx.cfg.target else {
                bail!("--target is required for theta");
            };
            let target = ScalarSquared::new(parse_rational(target)?)?;
            let pair = type_pair(&space, tol)?;
            let epsilon = pair.sphere.epsilon_threshold(&pair.x, &pair.y)?;
            let sol = solve_theta_for_distance(&pair.sphere, &pair.x, &pair.y, &pair.xy_sq, &target)?;
            let result = ThetaResult {
                epsilon,
                target_sq: encode_rational(target.value()),
                theta: sol.theta,
                achieved_sq: sol.achieved_sq,
                distance_error: (sol.achieved_sq - target.to_f64()).abs(),
                space: SpaceFile::from_space(&sol.space),
                pivots: sol.gram.pd_certificate().unwrap_or_default().iter().map(encode_rational).collect(),
            };
            println!("theta = {:.15} with distance error {:.3e}", result.theta, result.distance_error);
            ctx.write_report(file, result)?;
        }
        WitnessKind::Connect => {
            let phi = ctx.cfg.phi.unwrap_or(1.0);
            let pair = type_pair(&space, tol)?;
            let w = connectedness_witness(&pair.sphere, &pair.x, &pair.y, &pair.xy_sq, phi, policy, &mut normals)?;
            println!(
                "witness at angles {:.6}, {:.6} (< {:.6}) after {} attempts",
                w.angle_to_a, w.angle_to_b, w.half_phi, w.attempts
            );
            ctx.write_report(
                file,
                ConnectResult {
                    phi,
                    half_phi: w.half_phi,
                    sq_to_x: encode_rational(&w.sq_to_a),
                    sq_to_y: encode_rational(&w.sq_to_b),
                    angle_to_x: w.angle_to_a,
                    angle_to_y: w.angle_to_b,
                    chord_bound: w.chord_bound,
                    dist_to_x: w.dist_to_a,
                    dist_to_y: w.dist_to_b,
                    span_residual: w.span_residual,
                    attempts: w.attempts,
                    space: SpaceFile::from_space(&w.space),
                },
            )?;
        }
        WitnessKind::Chain => {
            let step = parse_rational(ctx.cfg.step.as_deref().unwrap_or("1/16"))?;
            let pair = type_pair(&space, tol)?;
            let chain = connect_by_chain(&pair.sphere, &pair.x, &pair.y, Some(&pair.xy_sq), &step, policy, &mut normals)?;
            let step_len = sphere_fraisse::rational::to_f64(&step).sqrt();
            let result = ChainResult {
                step_sq: encode_rational(&step),
                jumps: chain.jumps(),
                jump_bound: chain_length_bound(pair.sphere.radius(), step_len),
                link_sq: chain.link_sq.iter().map(encode_rational).collect(),
                links_certified: chain.link_spaces.iter().all(|s| certify_membership(s).is_member()),
            };
            println!("chain of {} jumps (bound {})", result.jumps, result.jump_bound);
            ctx.write_report(file, result)?;
        }
        WitnessKind::Extension => {
            let Some(dists) = &ctx.cfg.dists else {
                bail!("--dists is required for extension");
            };
            let dists = dists.iter().map(|d| parse_rational(d)).collect::<Result<Vec<_>>>()?;
            match one_point_extension_witness(&space, &dists)? {
                ExtensionOutcome::Realized { space, index, .. } => {
                    println!("realized as point {index}");
                    ctx.write_report(
                        file,
                        ExtensionResult::Realized {
                            index,
                            space: SpaceFile::from_space(&space),
                        },
                    )?;
                }
                ExtensionOutcome::Unrealizable { pivot_index, minor } => {
                    println!("unrealizable: pivot {pivot_index} is {minor}");
                    ctx.write_report(
                        file,
                        ExtensionResult::Unrealizable {
                            pivot_index,
                            minor: encode_rational(&minor),
                        },
                    )?;
                    return Ok(Outcome::Negative);
                }
            }
        }
        WitnessKind::Algebraicity => {
            let Some(x) = ctx.cfg.x else {
                bail!("--x is required for algebraicity");
            };
            let fixed = ctx.cfg.fixed.clone().unwrap_or_default();
            let count = ctx.cfg.count.unwrap_or(3);
            let ws = no_algebraicity_witnesses(&space, &fixed, x, count, policy, &mut normals)?;
            println!("{} distinct realizations of the type of point {x}", ws.len());
            let entries: Vec<AlgebraicityEntry> = ws
                .iter()
                .map(|w| AlgebraicityEntry {
                    index: w.index,
                    profile: w.profile.iter().map(encode_rational).collect(),
                    space_sha256: space_hash(&w.space),
                })
                .collect();
            ctx.write_report(file, entries)?;
        }
    }
    Ok(Outcome::Positive)
}

#[derive(Serialize)]
struct SampleResult {
    labels: Vec<String>,
    count: usize,
    csv: String,
    csv_sha256: String,
    space_sha256: String,
}

fn sample_cmd(ctx: &Ctx) -> Result<Outcome> {
    let space = ctx.space(0)?;
    let model = build_model(&space, ctx.cfg.seed())?;
    let count = ctx.cfg.samples.unwrap_or(DEFAULT_DUMP_SAMPLES);
    let s = sample(&model, count);
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    ctx.write_text("samples.csv", std::str::from_utf8(&buf)?)?;
    let path = ctx.write_report(
        "sample.json",
        SampleResult {
            labels: s.labels.clone(),
            count,
            csv: "samples.csv".into(),
            csv_sha256: sha256_hex(&buf),
            space_sha256: space_hash(&space),
        },
    )?;
    println!("{count} draws of {} coordinates ({})", s.dim(), path.display());
    Ok(Outcome::Positive)
}

#[derive(Serialize)]
struct MixingResult {
    #[serde(flatten)]
    report: sphere_fraisse::gaussian::MixingReport,
    csv: String,
    csv_sha256: String,
}

fn mixing(ctx: &Ctx) -> Result<Outcome> {
    let space = ctx.space(0)?;
    let event: CylinderEvent = ctx.cfg.event.as_deref().unwrap_or("0>0").parse()?;
    let k_values = ctx.cfg.k_values.clone().unwrap_or_else(|| DEFAULT_K_VALUES.to_vec());
    let samples = ctx.cfg.samples.unwrap_or(DEFAULT_SAMPLES);
    let report = mixing_experiment(&space, &event, &k_values, samples, ctx.cfg.seed())?;
    let csv = report.to_csv()?;
    ctx.write_text("mixing.csv", &csv)?;
    println!("event {event}, {samples} samples");
    for r in &report.rows {
        println!(
            "k={:<4} joint={:.6}±{:.6} product={:.6} kl={:.3e} tv_bound={:.3e}",
            r.k, r.joint.value, r.joint.std_error, r.product.value, r.kl, r.tv_bound
        );
    }
    ctx.write_report(
        "mixing.json",
        MixingResult {
            report,
            csv: "mixing.csv".into(),
            csv_sha256: sha256_hex(csv.as_bytes()),
        },
    )?;
    Ok(Outcome::Positive)
}

#[derive(Serialize)]
struct OrdersResult {
    distribution: sphere_fraisse::orders::OrderReport,
    uniformity: sphere_fraisse::orders::UniformityTest,
    verdict: String,
    support: sphere_fraisse::orders::FullSupportReport,
    exact: Option<std::collections::BTreeMap<String, f64>>,
}

fn orders(ctx: &Ctx) -> Result<Outcome> {
    let space = ctx.space(0)?;
    let indices = match &ctx.cfg.indices {
        Some(v) => v.clone(),
        None => (0..space.len()).collect(),
    };
    let model = build_model(&space, ctx.cfg.seed())?;
    let samples = ctx.cfg.samples.unwrap_or(DEFAULT_SAMPLES);
    let dist = order_distribution(&model, &indices, samples)?;
    let uniformity = uniformity_test(&dist)?;
    let support = full_support_check(&dist, &model)?;
    let exact = if indices.len() <= 4 {
        Some(exact_distribution(&model, &indices)?.into_iter().collect())
    } else {
        None
    };
    println!(
        "chi-square {:.4} on {} df, p-value {:.6e}",
        uniformity.chi_square.statistic, uniformity.chi_square.df, uniformity.chi_square.p_value
    );
    println!("{}", uniformity.verdict);
    if !support.all_observed {
        println!("suspicious: orderings never observed: {}", support.zero_cells.join(" "));
    }
    ctx.write_report(
        "orders.json",
        OrdersResult {
            distribution: dist.report(),
            verdict: uniformity.verdict.to_string(),
            uniformity,
            support,
            exact,
        },
    )?;
    Ok(Outcome::Positive)
}

/// Exit status for an error: a non-member input is a negative result, any
/// other failure is an error.
pub fn error_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<sphere_fraisse::Error>() {
        Some(sphere_fraisse::Error::NotMember { .. }) => 2,
        _ => 1,
    }
}
