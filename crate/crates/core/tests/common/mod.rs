#![allow(dead_code)]

use crm::attribute_space::Group;
use crm::energy_model::{EnergyModel, FeatureMap};
use crm::synthetic::GaussianAedSpec;
use crm::table::GroupTable;

/// Energy model whose posterior over `train_prior.support` is the exact Bayes posterior of `aed`.
///
/// Slot energy `s||x - mu||^2 = s||x||^2 - 2s mu.x + s||mu||^2`: the head row is `(-2s mu, s)`
/// and the dropped constants fold into `B(z) = m s ||mean mu(z)||^2`.
pub fn analytic_model(aed: &GaussianAedSpec, train_prior: &GroupTable) -> EnergyModel {
    let n = aed.ambient_dim;
    let mut model =
        EnergyModel::new(aed.spec.clone(), n, FeatureMap::default(), train_prior, 0).unwrap();
    let s = aed.energy_scale;
    {
        let head = model.head_mut();
        for (slot, mu) in aed.means.iter().enumerate() {
            let row = &mut head[slot * (n + 1)..(slot + 1) * (n + 1)];
            for (w, m) in row.iter_mut().zip(mu) {
                *w = -2.0 * s * m;
            }
            row[n] = s;
        }
    }
    for g in train_prior.support.iter() {
        model.set_bias(g, analytic_bias(aed, g)).unwrap();
    }
    model
}

pub fn analytic_bias(aed: &GaussianAedSpec, g: &Group) -> f64 {
    let m = aed.spec.num_attributes() as f64;
    let mean = aed.group_mean(g);
    m * aed.energy_scale * mean.iter().map(|v| v * v).sum::<f64>()
}

pub fn tv(a: &GroupTable, b: &GroupTable) -> f64 {
    a.iter()
        .map(|(g, p)| (p - b.get(g).unwrap()).abs())
        .sum::<f64>()
        / 2.0
}
