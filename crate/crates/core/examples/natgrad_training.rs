//! SGD, full NGD and component-wise NGD on two Gaussian blobs.

use igeom::natgrad::{train, Activation, Dataset, Network, Optimizer, TrainConfig};

fn main() -> igeom::Result<()> {
    let data = Dataset::blobs(100, 1.5, 7)?;
    let net = Network::init(&[2, 8, 1], Activation::Relu, Activation::Sigmoid, 7)?;
    for optimizer in [Optimizer::Sgd, Optimizer::Ngd, Optimizer::CwNgd] {
        let lr = if optimizer == Optimizer::Sgd {
            0.5
        } else {
            0.05
        };
        let cfg = TrainConfig {
            optimizer,
            lr,
            epochs: 10,
            batch: 40,
            seed: 7,
            ..Default::default()
        };
        let report = train(&net, &data, &cfg)?;
        let l = &report.losses;
        println!(
            "{optimizer:?}: loss {:.4} -> {:.4} after {} steps",
            l[0],
            l[l.len() - 1],
            l.len() - 1
        );
    }
    Ok(())
}
