//! One SE-Res2Net block: parameter count and output shape at each scale,
//! with and without the squeeze-excitation gate.

use eabn::model::{Builder, Ctx, Res2NetDims, SeRes2NetBlock};
use eabn::tensor::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> eabn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::new(
        &[2, 64, 15, 100],
        (0..2 * 64 * 1500)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )?;
    for se_reduction in [Some(16), None] {
        for scale in [1, 2, 4, 8] {
            let dims = Res2NetDims {
                in_channels: 64,
                bottleneck: 32,
                out_channels: 128,
                scale,
                stride: 2,
                se_reduction,
            };
            let mut store = ParamStore::<f32>::new();
            let block = SeRes2NetBlock::new(&mut Builder::new(&mut store, 0), "block", dims)?;
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let y = block.forward(&mut Ctx::new(&mut g, &mut store, false), xv)?;
            println!(
                "scale {scale} se {:5}: {:>6} params, output {:?}",
                se_reduction.is_some(),
                store.count_trainable(""),
                g.shape(y)
            );
        }
    }
    Ok(())
}
