//! Which unseen attribute combinations a training set can reach.

use crm::affine_hull::{
    connected_components, deterministic_spanning_set, enumerate_hull, in_affine_hull,
};
use crm::attribute_space::{AttributeSpec, Group, GroupSet};

fn main() -> crm::Result<()> {
    // bird x background, 0 = land, 1 = water
    let spec = AttributeSpec::new(vec![2, 2])?;
    let train: GroupSet = [[1, 1], [0, 1], [0, 0]]
        .into_iter()
        .map(Group::from)
        .collect();
    let r = in_affine_hull(&Group::from([1, 0]), &train, &spec)?;
    println!(
        "waterbird on land reachable: {} coefficients {:?}",
        r.is_member, r.coefficients
    );

    // two separate blocks on a 4x4 grid: the hull is the union of their subgrids
    let spec = AttributeSpec::new(vec![4, 4])?;
    let train: GroupSet = [[0, 0], [0, 1], [1, 1], [2, 2], [3, 3], [3, 2]]
        .into_iter()
        .map(Group::from)
        .collect();
    for (k, c) in connected_components(&train).iter().enumerate() {
        let members: Vec<String> = c.iter().map(Group::to_string).collect();
        println!("component {k}: {}", members.join(" "));
    }
    println!(
        "hull has {} of 16 groups",
        enumerate_hull(&train, &spec)?.len()
    );

    let spec = AttributeSpec::uniform(2, 6)?;
    let set = deterministic_spanning_set(&spec)?;
    println!(
        "{} groups span the 6x6 grid: {}",
        set.len(),
        enumerate_hull(&set, &spec)?.len() == 36
    );
    Ok(())
}
