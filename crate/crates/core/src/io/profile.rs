//! Device profile files: one `key=value` pair per line, `#` starts a comment.
//!
//! ```text
//! name=V100
//! sm_count=80
//! warp_size=32
//! max_warps_per_sm=64
//! max_threads_per_block=1024
//! clock_mhz=1312
//! gpu_count=8
//! interconnect=nvlink
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::device::DeviceProfile;
use crate::error::{Error, Result};

const KEYS: [&str; 8] = [
    "name",
    "sm_count",
    "warp_size",
    "max_warps_per_sm",
    "max_threads_per_block",
    "clock_mhz",
    "gpu_count",
    "interconnect",
];

pub fn load_device_profile(path: impl AsRef<Path>) -> Result<DeviceProfile> {
    parse_device_profile(&std::fs::read_to_string(path)?)
}

pub fn save_device_profile(profile: &DeviceProfile, path: impl AsRef<Path>) -> Result<()> {
    profile.validate()?;
    std::fs::write(path, profile_to_text(profile))?;
    Ok(())
}

pub fn profile_to_text(p: &DeviceProfile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name={}", p.name);
    let _ = writeln!(out, "sm_count={}", p.sm_count);
    let _ = writeln!(out, "warp_size={}", p.warp_size);
    let _ = writeln!(out, "max_warps_per_sm={}", p.max_warps_per_sm);
    let _ = writeln!(out, "max_threads_per_block={}", p.max_threads_per_block);
    let _ = writeln!(out, "clock_mhz={}", p.clock_mhz);
    let _ = writeln!(out, "gpu_count={}", p.gpu_count);
    let _ = writeln!(out, "interconnect={}", p.interconnect);
    out
}

pub fn parse_device_profile(text: &str) -> Result<DeviceProfile> {
    let mut values: BTreeMap<&str, (&str, usize, usize)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::parse(line_no, 1, "expected `key=value`"));
        };
        let key = line[..eq].trim();
        if !KEYS.contains(&key) {
            return Err(Error::parse(line_no, 1, format!("unknown profile key `{key}`")));
        }
        if values.insert(key, (line[eq + 1..].trim(), line_no, eq + 2)).is_some() {
            return Err(Error::parse(line_no, 1, format!("duplicate profile key `{key}`")));
        }
    }
    let get = |key: &str| {
        values
            .get(key)
            .copied()
            .ok_or_else(|| Error::validation(format!("device profile lacks `{key}`")))
    };
    let count = |key: &str| -> Result<u32> {
        let (v, line, col) = get(key)?;
        v.parse()
            .map_err(|_| Error::parse(line, col, format!("`{key}` must be a non-negative integer, got `{v}`")))
    };

    let (name, name_line, name_col) = get("name")?;
    if name.is_empty() {
        return Err(Error::parse(name_line, name_col, "empty device name"));
    }
    let (clock, clock_line, clock_col) = get("clock_mhz")?;
    let clock_mhz = clock
        .parse::<f64>()
        .map_err(|_| Error::parse(clock_line, clock_col, format!("bad clock_mhz `{clock}`")))?;
    let (ic, _, _) = get("interconnect")?;
    let profile = DeviceProfile {
        name: name.to_string(),
        sm_count: count("sm_count")?,
        warp_size: count("warp_size")?,
        max_warps_per_sm: count("max_warps_per_sm")?,
        max_threads_per_block: count("max_threads_per_block")?,
        clock_mhz,
        gpu_count: count("gpu_count")?,
        interconnect: ic.parse()?,
    };
    profile.validate()?;
    Ok(profile)
}
