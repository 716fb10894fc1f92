//! Occupancy maps for a pedestrian walking east along a corridor, written as
//! one JSON object per horizon step with the dense cell grid.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cbfrrt::geometry::Vec2;
use cbfrrt::prediction::{extract_disc, predict, AgentId, GridSpec, PredictorConfig, TrackletStore};
use cbfrrt::trace::fmt_num;

#[derive(Args)]
pub struct PredictDemoArgs {
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    #[arg(long, default_value_t = 0.2)]
    p_o: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: PredictDemoArgs) -> Result<u8, String> {
    let mut store = TrackletStore::new();
    for k in 0..4 {
        let t = k as f64 * 0.1;
        store
            .ingest_observation(AgentId(1), t, Vec2::new(-3.0 + t, 0.2))
            .map_err(|e| e.to_string())?;
    }
    let grid = GridSpec::covering(Vec2::new(-5.0, -2.0), Vec2::new(5.0, 4.0), 0.1);
    let config = PredictorConfig::new(args.horizon, 0.1, vec![[5.0, 0.0], [0.0, 4.0]], grid);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let maps = predict(&store, &config, &mut rng).map_err(|e| e.to_string())?;

    let mut out = String::new();
    for agent in &maps {
        for (k, m) in agent.maps.iter().enumerate() {
            let disc = extract_disc(m, args.p_o).map_err(|e| e.to_string())?;
            let cells: Vec<String> = m.cells.iter().map(|&p| fmt_num(p)).collect();
            out.push_str(&format!(
                "{{\"agent\":{},\"step\":{},\"t\":{},\"origin\":[{},{}],\"cell\":{},\"width\":{},\"height\":{},\"disc\":{{\"x\":{},\"y\":{},\"r\":{},\"vacuous\":{}}},\"cells\":[{}]}}\n",
                agent.agent_id.0,
                k,
                fmt_num(m.timestamp),
                fmt_num(m.origin.x),
                fmt_num(m.origin.y),
                fmt_num(m.cell_size),
                m.width,
                m.height,
                fmt_num(disc.center.x),
                fmt_num(disc.center.y),
                fmt_num(disc.radius),
                disc.vacuous,
                cells.join(",")
            ));
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, out).map_err(|e| format!("{}: {e}", path.display()))?,
        None => std::io::stdout().write_all(out.as_bytes()).map_err(|e| e.to_string())?,
    }
    Ok(0)
}
