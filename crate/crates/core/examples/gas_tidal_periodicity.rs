//! Recover a planted daily cycle and slow decay from per-block gas prices.

use etherscope::gas::{detect_periodicity, detrend_exponential, log_trend_slope, moving_average, per_block_gas_stats, GasField};
use etherscope::synth::{generate, Archetypes, GasProcess, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gas = GasProcess { period: 50, noise: 0.1, ..GasProcess::default() };
    let cfg = GenConfig {
        seed: 5,
        n_blocks: 20_000,
        archetypes: Archetypes { ponzi: 0, lottery: 0, erc20_token: 0, erc721_token: 0 },
        gas: gas.clone(),
        ..GenConfig::default()
    };
    let corpus = generate(&cfg)?;
    let series = per_block_gas_stats(&corpus.bundles);

    let detrended = detrend_exponential(&series.values(GasField::Mean));
    let p = detect_periodicity(&detrended, 12, 400)?;
    println!("planted period {}, best lag {} (r = {:.3})", gas.period, p.best_lag, p.autocorrelation);

    let ma = moving_average(&series, 100, GasField::Mean)?;
    let slope = log_trend_slope(&ma).expect("enough points");
    println!("log-price slope {slope:.3e} per block, planted {:.3e}", gas.decay_per_block.ln());
    Ok(())
}
