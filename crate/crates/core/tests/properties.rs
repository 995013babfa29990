use dfdnet::contrastive::info_nce;
use dfdnet::freq_filter::{irdft2, rdft2, FeatureMap};
use dfdnet::mask::Mask;
use dfdnet::{metrics, Tensor, TrainConfig};
use proptest::prelude::*;

fn image(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0.0f64..1.0, c * h * w).prop_map(move |v| Tensor::from_vec(&[c, h, w], v))
}

fn sized_pair() -> impl Strategy<Value = (Tensor, Tensor)> {
    (2usize..12, 2usize..12).prop_flat_map(|(h, w)| (image(3, h, w), image(3, h, w)))
}

proptest! {
    #[test]
    fn rdft_round_trip(x in (1usize..4, 2usize..20, 2usize..20).prop_flat_map(|(c, h, w)| image(c, h, w))) {
        let (_, h, w) = x.dims3();
        let back = irdft2(&rdft2(&FeatureMap::new(x.clone()).unwrap()), h, w).unwrap();
        for (a, b) in back.tensor().data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_is_symmetric_and_capped((a, b) in sized_pair()) {
        let ab = metrics::psnr(&a, &b).unwrap();
        prop_assert_eq!(ab, metrics::psnr(&b, &a).unwrap());
        prop_assert!(ab <= metrics::PSNR_CAP_DB);
        prop_assert_eq!(metrics::psnr(&a, &a).unwrap(), metrics::PSNR_CAP_DB);
    }

    #[test]
    fn full_mask_matches_plain_psnr((a, b) in sized_pair()) {
        let (_, h, w) = a.dims3();
        let masked = metrics::masked_psnr(&a, &b, &Mask::full(h, w)).unwrap().unwrap();
        prop_assert!((masked - metrics::psnr(&a, &b).unwrap()).abs() < 1e-9);
        prop_assert!(metrics::masked_psnr(&a, &b, &Mask::empty(h, w)).unwrap().is_none());
    }

    #[test]
    fn ssim_of_identical_images_is_one(a in image(3, 16, 16)) {
        prop_assert!((metrics::ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn config_text_round_trips(lr in 1e-6f64..1e-2, seed in any::<u64>(), iters in 1usize..10_000, lambda in 0.0f64..1.0) {
        let cfg = TrainConfig { lr, seed, total_iters: iters, lambda, ..TrainConfig::default() };
        prop_assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn info_nce_is_nonnegative_and_finite(
        pos in -1.0f64..1.0,
        negs in prop::collection::vec(-1.0f64..1.0, 1..20),
        tau in 0.01f64..2.0,
    ) {
        let l = info_nce(pos, &negs, tau).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
    }
}
