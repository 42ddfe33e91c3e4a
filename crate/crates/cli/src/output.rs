use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use crate::Common;

/// Where a command writes its table: `--out`, else the output directory,
/// else stdout.
pub fn destination(common: &Common, command: &str) -> Option<PathBuf> {
    common.out.clone().or_else(|| {
        common
            .out_dir
            .as_ref()
            .map(|dir| dir.join(format!("{command}.{}", common.format.extension())))
    })
}

pub fn open(common: &Common, command: &str) -> io::Result<(Box<dyn Write>, Option<PathBuf>)> {
    match destination(common, command) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Ok((Box::new(BufWriter::new(File::create(&path)?)), Some(path)))
        }
        None => Ok((Box::new(io::stdout().lock()), None)),
    }
}
