use crate::dataset::{Dataset, Metric};
use crate::oracle::RankTable;
use crate::prior::Prior;

/// Points 0, 1, 3, 7 on a line under the uniform prior.
pub fn l4() -> (Dataset, Prior, RankTable) {
    let ds = Dataset::from_line("l4", &[0.0, 1.0, 3.0, 7.0]).unwrap();
    let p = Prior::uniform(4).unwrap();
    let t = RankTable::build(&ds, Metric::Euclidean, &p).unwrap();
    (ds, p, t)
}

pub fn line(points: &[f64]) -> RankTable {
    let ds = Dataset::from_line("line", points).unwrap();
    let p = Prior::uniform(points.len()).unwrap();
    RankTable::build(&ds, Metric::Euclidean, &p).unwrap()
}
