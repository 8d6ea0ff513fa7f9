use std::collections::BTreeSet;

use fiberseg::classic::{segment_classic, ClassicParams};
use fiberseg::phantom::{generate, Fiber, PhantomConfig};
use ndarray::Array2;

#[test]
fn classic_counts_every_phantom_fiber() {
    for seed in 0..3 {
        let cfg = PhantomConfig { depth: 1, seed, ..Default::default() };
        let p = generate(&cfg).unwrap();
        let (img, gold) = p.slice(0);
        let out = segment_classic(&img.view(), &ClassicParams::default()).unwrap();
        assert_eq!(out.count, 200, "seed {seed}");
        let mut per_fiber = vec![BTreeSet::new(); 201];
        for ((y, x), &l) in out.labels.indexed_iter() {
            if l != 0 && gold[[y, x]] != 0 {
                per_fiber[gold[[y, x]] as usize].insert(l);
            }
        }
        assert!(per_fiber[1..].iter().all(|s| s.len() == 1), "seed {seed}: a fiber is split");
    }
}

#[test]
fn touching_fibers_are_separated() {
    let fibers = [
        Fiber { center_y: 40.0, center_x: 30.0, radius: 12.0 },
        Fiber { center_y: 40.0, center_x: 52.0, radius: 12.0 },
    ];
    let img = Array2::from_shape_fn((80, 84), |(y, x)| {
        let inside = fibers.iter().any(|f| f.contains(y, x));
        (if inside { 0.8f32 } else { 0.2 }) + ((y * 7 + x * 13) % 11) as f32 * 0.004
    });
    let out = segment_classic(&img.view(), &ClassicParams::default()).unwrap();
    assert_eq!(out.count, 2);
    assert_ne!(out.labels[[40, 30]], out.labels[[40, 52]]);
}
