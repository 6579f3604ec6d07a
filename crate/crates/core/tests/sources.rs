use proptest::prelude::*;
use s2sched::domain::{step_random_walk, step_two_state, validate_error_function, ErrorFunction};
use s2sched::rng::{Concern, Streams};

#[test]
fn two_state_flip_frequency() {
    let p = 0.3;
    let n = 1_000_000;
    let mut rng = Streams::new(7).stream(Concern::Source, 0);
    let mut s = 0u8;
    let mut flips = 0u64;
    for _ in 0..n {
        let next = step_two_state(s, p, rng.uniform()).unwrap();
        flips += u64::from(next != s);
        s = next;
    }
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    let freq = flips as f64 / n as f64;
    assert!((freq - p).abs() < 3.0 * sd, "{freq}");
}

#[test]
fn random_walk_increment_frequencies() {
    let (up, down, stay) = (0.3, 0.2, 0.5);
    let n = 1_000_000;
    let mut rng = Streams::new(8).stream(Concern::Source, 3);
    let mut counts = [0u64; 3];
    let mut s = 0i64;
    for _ in 0..n {
        let next = step_random_walk(s, up, down, stay, rng.uniform()).unwrap();
        match next - s {
            1 => counts[0] += 1,
            -1 => counts[1] += 1,
            0 => counts[2] += 1,
            other => panic!("increment {other}"),
        }
        s = next;
    }
    for (c, q) in counts.iter().zip([up, down, stay]) {
        let sd = (q * (1.0 - q) / n as f64).sqrt();
        assert!((*c as f64 / n as f64 - q).abs() < 3.0 * sd);
    }
}

#[test]
fn streams_replay_exactly() {
    let draw = |seed| {
        let mut r = Streams::new(seed).stream(Concern::Channel, 5);
        (0..100).map(|_| r.uniform()).collect::<Vec<_>>()
    };
    assert_eq!(draw(42), draw(42));
    assert_ne!(draw(42), draw(43));
    let mut a = Streams::new(42).stream(Concern::Channel, 5);
    let mut b = Streams::new(42).stream(Concern::Source, 5);
    assert_ne!(a.uniform(), b.uniform());
}

#[test]
fn builtin_errors_are_valid_up_to_200() {
    for f in [
        ErrorFunction::linear(),
        ErrorFunction::quadratic(),
        ErrorFunction::exponential(),
        ErrorFunction::indicator(),
    ] {
        assert!(validate_error_function(&f, 200).is_ok());
        let vals: Vec<f64> = (0..=200).map(|d| f.eval(d).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(vals[0], 0.0);
    }
}

proptest! {
    #[test]
    fn two_state_step_is_a_flip_or_stay(p in 0.001f64..=0.5, u in 0.0f64..1.0, s in 0u8..2) {
        let next = step_two_state(s, p, u).unwrap();
        prop_assert_eq!(next != s, u < p);
    }
}
