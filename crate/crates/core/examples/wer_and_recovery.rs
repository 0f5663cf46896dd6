//! Edit-distance scoring and the two relative metrics, WERR and WRR.

use seqssl::metrics::{corpus_score, edit_distance_align, werr, wrr};

fn main() -> seqssl::Result<()> {
    let reference = ["the", "cat", "sat", "on", "the", "mat"];
    let hypothesis = ["the", "cat", "sat", "the", "mat", "today"];
    let r = edit_distance_align(&reference, &hypothesis)?;
    println!(
        "S={} D={} I={} N={} WER={:.2}%",
        r.substitutions, r.deletions, r.insertions, r.reference_length, r.wer
    );

    // Corpus WER sums errors before dividing.
    let pairs: Vec<(&[u32], &[u32])> = vec![(&[1, 2, 3], &[1, 2, 3]), (&[4], &[5, 6])];
    println!("corpus WER {:.2}%", corpus_score(pairs)?.wer);

    // Baseline 16.77, oracle 14.87.
    for ssl in [15.60, 15.22, 15.02] {
        println!(
            "SSL WER {ssl:.2}: WERR {:.1}%, WRR {:.1}%",
            werr(16.77, ssl)?,
            wrr(16.77, ssl, 14.87)?
        );
    }
    Ok(())
}
