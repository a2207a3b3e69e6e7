use std::path::Path;

use anyhow::{Context, Result};
use hsbm::summaries::{point_partition, CoMembership};

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes `{tag}.csv` and `{tag}.pgm`.
pub fn write_matrix(dir: &Path, tag: &str, cm: &CoMembership) -> Result<()> {
    write(&dir.join(format!("{tag}.csv")), cm.to_csv())?;
    write(&dir.join(format!("{tag}.pgm")), cm.to_pgm())
}

/// Co-membership matrix plus its point partition as `{tag}_partition.csv`.
pub fn write_summary(dir: &Path, cm: &CoMembership) -> Result<Vec<usize>> {
    let tag = cm.tag();
    write_matrix(dir, &tag, cm)?;
    let labels = point_partition(cm);
    write(
        &dir.join(format!("{tag}_partition.csv")),
        hsbm::summaries::labels_csv(&labels),
    )?;
    Ok(labels)
}
