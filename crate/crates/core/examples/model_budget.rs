//! Parameter and FLOP budgets of the A0 and SE-Res2Net perception branches
//! on both feature kinds.

use eabn::features::FeatureKind;
use eabn::model::{BackboneConfig, EabnModel};
use eabn::tensor::ParamStore;

fn main() -> eabn::Result<()> {
    for (name, backbone) in [
        ("efficientnet-a0", BackboneConfig::efficientnet_a0()),
        ("se-res2net50", BackboneConfig::se_res2net50()),
    ] {
        for kind in [FeatureKind::Lfcc, FeatureKind::LogPowSpec] {
            let mut store = ParamStore::<f32>::new();
            let model = EabnModel::for_features(&mut store, &backbone, kind, 0)?;
            let (h, w) = kind.dims();
            println!(
                "{name:16} {:10} {h}x{w}: params {:>9} (perception {:>9}), flops {:>14}",
                kind.name(),
                model.count_params(),
                model.count_perception_params(),
                model.count_flops((h, w))?
            );
        }
    }
    Ok(())
}
