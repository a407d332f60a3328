use leakscope::countermeasures::{apply_padding, overhead, PaddingStrategy};
use leakscope::evaluation::tasks::os_items;
use leakscope::evaluation::{sweep, ClassifierSpec, SweepConfig};
use leakscope::ingest::{from_canonical_str, to_canonical_string};
use leakscope::simulator::{generate_suite, ScenarioConfig};
use leakscope::{Os, Service};

fn small() -> leakscope::Dataset {
    let scenarios: Vec<ScenarioConfig> = [Os::Ios, Os::Osx]
        .into_iter()
        .map(|os| ScenarioConfig {
            samples_per_class: 40,
            ..ScenarioConfig::new(Service::IMessage, os)
        })
        .collect();
    generate_suite(&scenarios, 11).unwrap()
}

#[test]
fn simulated_data_survives_the_canonical_format_and_fingerprints() {
    let dataset = from_canonical_str(&to_canonical_string(&small())).unwrap();
    let config = SweepConfig {
        n_values: vec![5],
        instances_per_n: 200,
        seed: 11,
        ..SweepConfig::default()
    };
    let result = sweep(&os_items(&dataset, None), ClassifierSpec::binomial(), &config).unwrap();
    assert_eq!(result.curve.at(5), Some(1.0));
}

#[test]
fn block_padding_rounds_every_packet_up() {
    let dataset = small();
    let padded = apply_padding(&dataset, &PaddingStrategy::BlockQuantize { block: 256 }, 1).unwrap();
    for (a, b) in dataset.traces.iter().zip(&padded.traces) {
        for (p, q) in a.packets.iter().zip(&b.packets) {
            assert_eq!(q.payload_length % 256, 0);
            assert!(q.payload_length >= p.payload_length && q.payload_length - p.payload_length < 256);
        }
    }
    assert!(overhead(&dataset, &padded).unwrap().mean_added_bytes > 0.0);
}
