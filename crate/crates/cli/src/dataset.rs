//! On-disk layout of a processed dataset directory: the catalog sidecar
//! plus one transition file per split.

use std::path::Path;

use offrec_core::data::{
    read_transitions, write_transitions, Catalog, ProcessedDataset, Transition,
};
use offrec_core::{Error, Result};

pub const CATALOG_FILE: &str = "catalog.csv";
pub const TRAIN_FILE: &str = "train.txt";
pub const VALIDATION_FILE: &str = "validation.txt";
pub const TEST_FILE: &str = "test.txt";

pub struct LoadedDataset {
    pub catalog: Catalog,
    pub train: Vec<Transition>,
    pub validation: Vec<Transition>,
    pub test: Vec<Transition>,
}

/// Writes the four dataset files into `dir` and returns their names.
pub fn save(dir: &Path, ds: &ProcessedDataset) -> Result<Vec<&'static str>> {
    ds.catalog.save(&dir.join(CATALOG_FILE))?;
    write_transitions(&dir.join(TRAIN_FILE), &ds.train)?;
    write_transitions(&dir.join(VALIDATION_FILE), &ds.validation)?;
    write_transitions(&dir.join(TEST_FILE), &ds.test)?;
    Ok(vec![CATALOG_FILE, TRAIN_FILE, VALIDATION_FILE, TEST_FILE])
}

pub fn load(dir: &Path) -> Result<LoadedDataset> {
    if !dir.join(CATALOG_FILE).exists() {
        return Err(Error::data(format!(
            "{}: not a dataset directory (missing {CATALOG_FILE})",
            dir.display()
        )));
    }
    Ok(LoadedDataset {
        catalog: Catalog::load(&dir.join(CATALOG_FILE))?,
        train: read_transitions(&dir.join(TRAIN_FILE))?,
        validation: read_transitions(&dir.join(VALIDATION_FILE))?,
        test: read_transitions(&dir.join(TEST_FILE))?,
    })
}

/// All ids a dataset references must fit the catalog; a checkpoint trained
/// on a different catalog is caught here rather than deep in a batch.
pub fn check_ids(ds: &LoadedDataset) -> Result<()> {
    let items = ds.catalog.len() as u32;
    for (name, split) in
        [("train", &ds.train), ("validation", &ds.validation), ("test", &ds.test)]
    {
        for t in split.iter() {
            let bad_state = t.state.ids().iter().chain(t.next_state.ids()).any(|&id| id > items);
            if bad_state || t.action == 0 || t.action > items {
                return Err(Error::data(format!(
                    "{name} split references item ids beyond the catalog size {items}"
                )));
            }
        }
    }
    Ok(())
}
