//! Beam search over a hand-written bigram decoder, showing how the coverage
//! and length terms change the ranking.

use seqssl::decode::{beam_search, sequence_score, BeamConfig, StepModel, StepScores};

/// Fixed next-token probabilities given the previous token. Attention moves
/// one encoder state per step.
struct Bigram {
    table: [[f64; 4]; 4],
    encoder_len: usize,
}

impl StepModel for Bigram {
    type State = usize;

    fn initial_state(&self) -> usize {
        0
    }

    fn encoder_len(&self) -> usize {
        self.encoder_len
    }

    fn vocab_size(&self) -> usize {
        4
    }

    fn step(&self, &t: &usize, prev: usize) -> seqssl::Result<StepScores<usize>> {
        let mut attention = vec![0.0; self.encoder_len];
        attention[t.min(self.encoder_len - 1)] = 1.0;
        Ok(StepScores {
            log_posteriors: self.table[prev].iter().map(|p| p.ln()).collect(),
            attention,
            state: t + 1,
        })
    }
}

fn main() -> seqssl::Result<()> {
    // Tokens: 0 start, 1 end, 2 and 3 content. Ending early is likely.
    let model = Bigram {
        table: [
            [0.01, 0.34, 0.4, 0.25],
            [0.01, 0.97, 0.01, 0.01],
            [0.01, 0.45, 0.04, 0.5],
            [0.01, 0.45, 0.5, 0.04],
        ],
        encoder_len: 4,
    };
    for (name, cfg) in [
        ("log-probability only", BeamConfig::unscored(8)),
        ("default scoring", BeamConfig { beam_width: 8, ..BeamConfig::default() }),
        ("strong coverage", BeamConfig { beam_width: 8, lambda_cov: 1.5, ..BeamConfig::default() }),
    ] {
        let ranked = beam_search(&model, &cfg)?;
        println!("{name}:");
        for h in ranked.iter().take(3) {
            let check = sequence_score(h.log_prob, &h.attention_accum, h.tokens.len(), &cfg);
            println!(
                "  [{}] log p {:.3}  score {:.3} (recomputed {:.3})",
                h.tokens, h.log_prob, h.score, check
            );
        }
    }
    Ok(())
}
