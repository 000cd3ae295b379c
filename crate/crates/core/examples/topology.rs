//! Path-based connectivity (COR/INF) of a prediction with a broken vessel.

use rrwnet::data::Mask;
use rrwnet::metrics::{skeletonize, topo_cor_inf, TopoConfig};

fn main() -> rrwnet::Result<()> {
    // an L-shaped vessel, three pixels wide
    let gt = Mask::from_fn(40, 40, |y, x| (5..35).contains(&x) && (18..21).contains(&y) || (5..35).contains(&y) && (30..33).contains(&x));
    let mut broken = gt.clone();
    for y in 17..22 {
        for x in 14..22 {
            broken.set(y, x, false);
        }
    }
    let cfg = TopoConfig { n_paths: 1000, ..TopoConfig::default() };
    println!("skeleton pixels: {}", skeletonize(&gt).count());
    let same = topo_cor_inf(&gt, &gt, &cfg)?;
    println!("identical maps: COR {:.1}%, INF {:.1}%", same.cor, same.inf);
    let cut = topo_cor_inf(&gt, &broken, &cfg)?;
    println!("8-pixel gap:    COR {:.1}%, INF {:.1}%", cut.cor, cut.inf);
    Ok(())
}
