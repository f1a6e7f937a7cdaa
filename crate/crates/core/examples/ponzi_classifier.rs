//! Train the Ponzi classifier on 200 synthetic contracts, cross-validate,
//! then score a fresh corpus with the saved model.

use std::collections::BTreeMap;

use etherscope::ponzi::{cross_validate, evaluate, extract_all_features, feature_names, train, Hyperparams, Label, Model};
use etherscope::synth::{generate, Archetypes, Corpus, GenConfig};

fn dataset(corpus: &Corpus) -> Result<(Vec<Vec<f64>>, Vec<Label>), Box<dyn std::error::Error>> {
    let feats: BTreeMap<_, _> = extract_all_features(&corpus.bundles, 4)?.into_iter().collect();
    let labels = corpus.ground_truth.labeled_contracts();
    Ok((labels.iter().map(|l| feats[&l.contract].to_f64_vec()).collect(), labels.iter().map(|l| l.label).collect()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let archetypes = Archetypes { ponzi: 50, lottery: 150, erc20_token: 0, erc721_token: 0 };
    let corpus = generate(&GenConfig { seed: 7, n_blocks: 400, archetypes: archetypes.clone(), ..GenConfig::default() })?;
    let (xs, ys) = dataset(&corpus)?;

    let cv = cross_validate(&xs, &ys, 5, Hyperparams::default())?;
    println!("5-fold: precision {:.3} recall {:.3} f1 {:.3}", cv.pooled.precision, cv.pooled.recall, cv.pooled.f1);

    let trained = train(&xs, &ys, Hyperparams::default(), feature_names())?;
    println!("loss {:.4} -> {:.4}", trained.loss_history[0], trained.loss_history.last().unwrap());
    let path = std::env::temp_dir().join("etherscope-model.txt");
    trained.model.save(&path)?;

    let heaviest = trained
        .model
        .feature_names
        .iter()
        .zip(&trained.model.weights)
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    println!("largest weight: {} ({:+.3})", heaviest.0, heaviest.1);

    let fresh = generate(&GenConfig { seed: 99, n_blocks: 400, archetypes, ..GenConfig::default() })?;
    let (xs, ys) = dataset(&fresh)?;
    let e = evaluate(&Model::load(&path)?, &xs, &ys)?;
    println!("held-out corpus: f1 {:.3} {:?}", e.f1, e.confusion);
    Ok(())
}
