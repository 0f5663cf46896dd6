//! Generate a small synthetic corpus, split it the way the experiments do
//! and round-trip one split through the dataset file format.

use seqssl::synthdata::{generate_corpus, load_dataset, save_dataset, split_paper_protocol, CorpusConfig, Role, SplitConfig};

fn main() -> seqssl::Result<()> {
    let corpus_cfg = CorpusConfig {
        corpus_size: 1000,
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&corpus_cfg)?;
    let splits = split_paper_protocol(
        &corpus,
        &SplitConfig {
            test_size: 100,
            validation_size: 100,
            ..SplitConfig::default()
        },
    )?;
    for role in Role::ALL {
        let d = splits.get(role);
        let frames: usize = d.utterances.iter().map(|u| u.features.frames()).sum();
        let tokens: usize = d.utterances.iter().map(|u| u.tokens.content().len()).sum();
        println!("{:<12} {:>4} utterances, {frames:>6} frames, {tokens:>5} tokens", role.name(), d.len());
    }
    let first = &splits.labeled.utterances[0];
    println!("{}: {} frames -> {}", first.id, first.features.frames(), first.tokens);

    let path = std::env::temp_dir().join(format!("seqssl-example-{}.s2s", std::process::id()));
    save_dataset(&path, &corpus_cfg, &splits.labeled)?;
    let (cfg_back, data_back) = load_dataset(&path)?;
    std::fs::remove_file(&path)?;
    println!("round trip identical: {}", cfg_back == corpus_cfg && data_back == splits.labeled);
    Ok(())
}
