use fedpart_core::metrics::{comm_cost_round, fmt_sig6, parse_rounds, rounds_to_target, RoundLog};
use fedpart_core::nn::{LayerSpec, ModelSpec};
use fedpart_core::Strategy;
use proptest::prelude::*;

fn logs(accs: &[f64]) -> Vec<RoundLog> {
    accs.iter()
        .enumerate()
        .map(|(i, &a)| RoundLog {
            round: i + 1,
            mean_client_accuracy: a,
            mean_client_loss: 0.0,
            uplink_bytes: 0,
            downlink_bytes: 0,
            cumulative_bytes: 0,
            selected: vec![],
        })
        .collect()
}

proptest! {
    #[test]
    fn higher_targets_never_arrive_earlier(accs in prop::collection::vec(0.0f64..1.0, 1..30), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let logs = logs(&accs);
        match (rounds_to_target(&logs, lo), rounds_to_target(&logs, hi)) {
            (Some(r_lo), Some(r_hi)) => prop_assert!(r_lo <= r_hi),
            (None, Some(_)) => prop_assert!(false, "reached {} but not {}", hi, lo),
            _ => {}
        }
    }

    #[test]
    fn slices_partition_the_payload(hidden in 1usize..40, dim in 1usize..40, classes in 2usize..10, c in 1usize..20, sf in 0usize..4) {
        let spec = ModelSpec::new(
            vec![dim],
            vec![
                LayerSpec::Dense { in_dim: dim, out_dim: hidden },
                LayerSpec::Relu,
                LayerSpec::Dense { in_dim: hidden, out_dim: classes },
            ],
            sf,
            classes,
        ).unwrap();
        let fa = comm_cost_round(Strategy::FedAvg, &spec, c);
        let hd = comm_cost_round(Strategy::Hdafl, &spec, c);
        let lg = comm_cost_round(Strategy::LgComplement, &spec, c);
        prop_assert_eq!(hd.0 + lg.0, fa.0);
        prop_assert_eq!(hd.1 + lg.1, fa.1);
        if sf < 3 {
            prop_assert!(hd.0 < fa.0);
        }
    }

    #[test]
    fn sig6_keeps_six_significant_digits(x in -1e9f64..1e9) {
        let back: f64 = fmt_sig6(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs().max(1e-300));
    }
}

#[test]
fn malformed_csv_is_rejected() {
    assert!(parse_rounds("round,acc\n").is_err());
    let header = fedpart_core::metrics::CSV_HEADER;
    assert!(parse_rounds(&format!("{header}\n1,0.5,1,2,3\n")).is_err());
    let ok = parse_rounds(&format!("{header}\n1,0.5,1.25,4,4,8,0;2\n")).unwrap();
    assert_eq!(ok[0].selected, vec![0, 2]);
    assert_eq!(ok[0].cumulative_bytes, 8);
}
