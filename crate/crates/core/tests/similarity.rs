//! Similarity matrices against a direct recomputation from the trace.

use approx::assert_abs_diff_eq;
use mnm::autodiff::Tensor;
use mnm::engine::{Model, ModelConfig, Variant};
use mnm::harness::trace::{matrix_csv, similarity_trace, SimilarityPair};
use mnm::init::{stream_rng, Stream};
use mnm::tasks::TaskSpec;

fn model(variant: Variant) -> (Model<f64>, Vec<mnm::tasks::TaskEpisode>) {
    let mut cfg = ModelConfig::new(variant, TaskSpec::DictionaryInference { k: 3, l: 2 }, 7);
    cfg.heads = 2;
    cfg.mem_layers = 2;
    let eps = cfg.task.batch(3, &mut stream_rng(4, Stream::Trace)).unwrap();
    (Model::new(cfg, 12).unwrap(), eps)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| if n == 0.0 { 0.0 } else { x / n }).collect()
}

/// Batch row `b` of `[B, d]` tensors, averaged over heads.
fn averaged(ts: &[Tensor<f64>], b: usize) -> Vec<f64> {
    let d = ts[0].shape()[1];
    (0..d)
        .map(|j| ts.iter().map(|t| t.data()[b * d + j]).sum::<f64>() / ts.len() as f64)
        .collect()
}

#[test]
fn matrices_match_direct_recomputation() {
    for variant in [Variant::MnmG, Variant::MnmP, Variant::LstmSalu] {
        let (m, eps) = model(variant);
        let trace = m.run_episode(&eps, None).unwrap();
        for b in 0..eps.len() {
            for pair in SimilarityPair::ALL {
                let s = similarity_trace(&trace, pair, b).unwrap();
                assert_eq!(s.len(), trace.steps.len());
                for (t2, row) in s.iter().enumerate() {
                    for (t1, &got) in row.iter().enumerate() {
                        let (a, c) = (&trace.steps[t2], &trace.steps[t1]);
                        let (ia, ic) = (a.interactions.as_ref().unwrap(), c.interactions.as_ref().unwrap());
                        let (x, y) = match pair {
                            SimilarityPair::ReadValue => {
                                let d = a.readout.shape()[1];
                                (
                                    a.readout.data()[b * d..(b + 1) * d].to_vec(),
                                    averaged(&ic.target_values, b),
                                )
                            }
                            SimilarityPair::ValueValue => {
                                (averaged(&ia.target_values, b), averaged(&ic.target_values, b))
                            }
                            SimilarityPair::WriteKeyWriteKey => {
                                (averaged(&ia.write_keys, b), averaged(&ic.write_keys, b))
                            }
                            SimilarityPair::ReadKeyWriteKey => {
                                (averaged(&ia.read_keys, b), averaged(&ic.write_keys, b))
                            }
                        };
                        let want: f64 = unit(&x).iter().zip(unit(&y)).map(|(p, q)| p * q).sum();
                        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn self_pairs_are_symmetric_with_unit_diagonal() {
    let (m, eps) = model(Variant::MnmP);
    let trace = m.run_episode(&eps, None).unwrap();
    for pair in [SimilarityPair::ValueValue, SimilarityPair::WriteKeyWriteKey] {
        let s = similarity_trace(&trace, pair, 1).unwrap();
        for (i, row) in s.iter().enumerate() {
            assert_abs_diff_eq!(row[i], 1.0, epsilon = 1e-12);
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, s[j][i]);
                assert!(x.abs() <= 1.0 + 1e-12);
            }
        }
    }
}

#[test]
fn csv_holds_the_matrix() {
    let (m, eps) = model(Variant::MnmG);
    let trace = m.run_episode(&eps, None).unwrap();
    let s = similarity_trace(&trace, SimilarityPair::ReadKeyWriteKey, 0).unwrap();
    let csv = matrix_csv(&s);
    let parsed: Vec<Vec<f64>> = csv
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(parsed.len(), s.len());
    for (p, r) in parsed.iter().zip(&s) {
        for (a, b) in p.iter().zip(r) {
            assert_abs_diff_eq!(a, b, epsilon = 5e-7);
        }
    }
}

#[test]
fn plain_lstm_has_no_trace() {
    let (m, eps) = model(Variant::Lstm);
    let trace = m.run_episode(&eps, None).unwrap();
    assert!(similarity_trace(&trace, SimilarityPair::ReadValue, 0).is_err());
}
