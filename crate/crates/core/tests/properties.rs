use cxrnet::datapipe::{augment, batches, AugmentConfig, BatchPlan, ImageSet, Label};
use cxrnet::metrics::{confusion_at_threshold, pr_curve_auc, roc_curve_auc};
use cxrnet::trainer::evaluate;
use cxrnet::{ModelSpec, Network, Prng, Tensor};
use proptest::prelude::*;

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..20).prop_map(|k| k as f64 / 20.0), n),
            prop::collection::vec(0u8..2, n),
        )
            .prop_map(|(s, mut l)| {
                l[0] = 0;
                l[1] = 1;
                (s, l)
            })
    })
}

proptest! {
    #[test]
    fn map_and_zip_preserve_shape(dims in prop::collection::vec(1usize..5, 1..4), seed: u64) {
        let mut rng = Prng::new(seed);
        let n: usize = dims.iter().product();
        let a = Tensor::from_vec(&dims, (0..n).map(|_| rng.next_f64()).collect()).unwrap();
        let b = a.map(|v| 2.0 * v - 1.0).unwrap();
        prop_assert_eq!(b.dims(), a.dims());
        let c = a.zip_with(&b, |x, y| x * y).unwrap();
        prop_assert_eq!(c.dims(), a.dims());
    }

    #[test]
    fn auc_invariant_under_monotone_transform((scores, labels) in scored()) {
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).tanh() * 0.5 + 0.5).collect();
        let (_, roc_a) = roc_curve_auc(&scores, &labels).unwrap();
        let (_, roc_b) = roc_curve_auc(&squashed, &labels).unwrap();
        prop_assert!((roc_a - roc_b).abs() < 1e-12);
        let (_, pr_a) = pr_curve_auc(&scores, &labels).unwrap();
        let (_, pr_b) = pr_curve_auc(&squashed, &labels).unwrap();
        prop_assert!((pr_a - pr_b).abs() < 1e-12);
    }

    #[test]
    fn roc_auc_symmetric_under_class_swap((scores, labels) in scored()) {
        let neg: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let (_, a) = roc_curve_auc(&scores, &labels).unwrap();
        let (_, b) = roc_curve_auc(&neg, &flipped).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn confusion_invariant_under_permutation((scores, labels) in scored(), seed: u64, thr in 0.0f64..1.0) {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        Prng::new(seed).shuffle(&mut order);
        let s2: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        let l2: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        let a = confusion_at_threshold(&scores, &labels, thr).unwrap();
        prop_assert_eq!(a, confusion_at_threshold(&s2, &l2, thr).unwrap());
        prop_assert_eq!(a.total(), scores.len() as u64);
        let (_, auc_a) = roc_curve_auc(&scores, &labels).unwrap();
        let (_, auc_b) = roc_curve_auc(&s2, &l2).unwrap();
        prop_assert!((auc_a - auc_b).abs() < 1e-12);
    }

    #[test]
    fn batches_partition_every_epoch(n in 1usize..70, bs in 1usize..40, seed: u64, epoch in 0u64..5) {
        let images = (0..n).map(|i| Tensor::full(&[2, 2], (i % 7) as f32 / 7.0).unwrap()).collect();
        let labels = (0..n).map(|i| if i % 2 == 0 { Label::Normal } else { Label::Pneumonia }).collect();
        let set = ImageSet::new(images, labels).unwrap();
        let all: Vec<_> = batches(&set, BatchPlan::training(bs, AugmentConfig::none()), seed, epoch)
            .unwrap()
            .map(|b| b.unwrap())
            .collect();
        prop_assert_eq!(all.len(), n.div_ceil(bs));
        prop_assert!(all.iter().all(|b| b.indices.len() <= bs && b.images.dims()[0] == b.indices.len()));
        let mut seen: Vec<usize> = all.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn augmentation_stays_in_pixel_range(seed: u64) {
        let mut rng = Prng::new(seed);
        let img = Tensor::from_vec(&[12, 10], (0..120).map(|_| rng.next_f64() as f32).collect()).unwrap();
        let out = augment(&img, &AugmentConfig::default(), &mut rng).unwrap();
        prop_assert_eq!(out.dims(), img.dims());
        prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn evaluation_follows_dataset_order() {
    let mut rng = Prng::new(4);
    let images: Vec<Tensor<f32>> = (0..9)
        .map(|_| Tensor::from_vec(&[8, 8], (0..64).map(|_| rng.next_f64() as f32).collect()).unwrap())
        .collect();
    let labels: Vec<Label> = (0..9)
        .map(|i| if i < 4 { Label::Normal } else { Label::Pneumonia })
        .collect();
    let set = ImageSet::new(images, labels).unwrap();
    let net = Network::<f32>::init(ModelSpec::classifier(8), &mut Prng::new(1)).unwrap();
    let base = evaluate(&net, &set, 4).unwrap();
    let order = [8, 3, 0, 5, 1, 7, 2, 6, 4];
    let permuted = evaluate(&net, &set.select(&order).unwrap(), 4).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(permuted.scores[k].to_bits(), base.scores[i].to_bits());
        assert_eq!(permuted.labels[k], base.labels[i]);
    }
    // Batch size does not change per-image scores.
    assert_eq!(evaluate(&net, &set, 9).unwrap(), base);
}
