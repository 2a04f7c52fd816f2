// Licensed under the Apache-2.0 license

//! Address-space layout of the emulated device and the on-disk image format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Address;

/// Inclusive-exclusive byte range `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub start: u16,
    pub len: u32,
}

impl Region {
    pub const fn new(start: u16, len: u32) -> Self {
        Region { start, len }
    }

    /// Region spanning `[first, last]`, both inclusive.
    pub fn inclusive(first: Address, last: Address) -> Self {
        Region { start: first, len: last as u32 - first as u32 + 1 }
    }

    pub fn end(&self) -> u32 {
        self.start as u32 + self.len
    }

    /// Address of the last byte. Meaningless for empty regions.
    pub fn last(&self) -> Address {
        (self.end() - 1) as Address
    }

    pub fn contains(&self, addr: Address) -> bool {
        (addr as u32) >= self.start as u32 && (addr as u32) < self.end()
    }

    pub fn contains_range(&self, start: Address, len: u32) -> bool {
        len == 0 || (self.contains(start) && start as u32 + len <= self.end())
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        (self.start as u32) < other.end() && (other.start as u32) < self.end()
    }

    pub fn is_within(&self, outer: &Region) -> bool {
        outer.contains_range(self.start, self.len)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:#06x}, {:#07x})", self.start, self.end())
    }
}

/// Monitor-owned page layout. These addresses are fixed for every map.
pub mod page {
    use super::Region;

    pub const BASE: u16 = 0xFF00;
    pub const CHAL: Region = Region::new(0xFF00, 16);
    pub const LMT: Region = Region::new(0xFF10, 16);
    pub const EXEC: u16 = 0xFF20;
    pub const ER_MIN: u16 = 0xFF22;
    pub const ER_MAX: u16 = 0xFF24;
    pub const OR_MIN: u16 = 0xFF26;
    pub const OR_MAX: u16 = 0xFF28;
    /// ER_MIN..=OR_MAX, the four APEX metadata words.
    pub const METADATA: Region = Region::new(0xFF22, 8);
}

/// Peripheral register addresses.
pub mod periph {
    pub const GPIO_IN: u16 = 0xF000;
    pub const GPIO_OUT: u16 = 0xF002;
    pub const RTC: u16 = 0xF004;
    pub const IRQ_VEC: u16 = 0xF006;
    pub const ATT_OUT: u16 = 0xF008;
    pub const DMA_SRC: u16 = 0xF010;
    pub const DMA_DST: u16 = 0xF012;
    pub const DMA_LEN: u16 = 0xF014;
    pub const DMA_CTRL: u16 = 0xF016;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryMap {
    pub rom: Region,
    pub pmem: Region,
    pub dmem: Region,
    pub periph: Region,
    pub monitor: Region,
    /// Attestation key, inside `rom`.
    pub key: Region,
    /// SW-Att code, inside `rom`.
    pub swatt: Region,
    pub boot_vector: Address,
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("regions {0} and {1} overlap")]
    Overlap(&'static str, &'static str),
    #[error("{0} must lie inside rom")]
    NotInRom(&'static str),
    #[error("region {0} has bad alignment or size")]
    Misaligned(&'static str),
    #[error("map file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Default for MemoryMap {
    fn default() -> Self {
        MemoryMap::with_pmem_size(0x2000)
    }
}

impl MemoryMap {
    /// The default layout with a PMEM of `pmem_len` bytes starting at 0x1000.
    pub fn with_pmem_size(pmem_len: u32) -> Self {
        MemoryMap {
            rom: Region::new(0x0000, 0x1000),
            pmem: Region::new(0x1000, pmem_len),
            dmem: Region::new(0x3000, 0x1000),
            periph: Region::new(0xF000, 0x100),
            monitor: Region::new(page::BASE, 0x100),
            key: Region::new(0x0FE0, 32),
            swatt: Region::new(0x0800, 0x10),
            boot_vector: 0x0000,
        }
    }

    fn named(&self) -> [(&'static str, Region); 5] {
        [
            ("rom", self.rom),
            ("pmem", self.pmem),
            ("dmem", self.dmem),
            ("periph", self.periph),
            ("monitor", self.monitor),
        ]
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let named = self.named();
        for (i, (na, a)) in named.iter().enumerate() {
            if a.start % 2 != 0 || a.len % 2 != 0 {
                return Err(MapError::Misaligned(na));
            }
            for (nb, b) in &named[i + 1..] {
                if a.overlaps(b) {
                    return Err(MapError::Overlap(na, nb));
                }
            }
        }
        if !self.key.is_within(&self.rom) {
            return Err(MapError::NotInRom("key"));
        }
        if !self.swatt.is_within(&self.rom) {
            return Err(MapError::NotInRom("swatt"));
        }
        if self.key.overlaps(&self.swatt) {
            return Err(MapError::Overlap("key", "swatt"));
        }
        if self.pmem.len < 0x400 {
            return Err(MapError::Misaligned("pmem"));
        }
        Ok(())
    }

    pub fn is_mapped(&self, addr: Address) -> bool {
        self.named().iter().any(|(_, r)| r.contains(addr))
    }

    pub fn range_mapped(&self, start: Address, len: u32) -> bool {
        (0..len).all(|i| {
            let a = start as u32 + i;
            a <= 0xFFFF && self.is_mapped(a as Address)
        })
    }

    /// SW-Att exit: the last two-byte instruction slot of the region.
    pub fn swatt_exit(&self) -> Address {
        self.swatt.last() - 1
    }

    /// Word the stack pointer starts at.
    pub fn stack_top(&self) -> Address {
        (self.dmem.end() - 2) as Address
    }

    /// Highest address still considered part of the stack.
    pub fn stack_base(&self) -> Address {
        self.dmem.last()
    }

    /// Serializes to the sidecar map format: one `[region.NAME]` table per
    /// region with `start` and `length`, plus `boot_vector`.
    pub fn to_sidecar(&self) -> String {
        let mut out = String::from("# attestsim memory map\nversion = 1\n");
        out.push_str(&format!("boot_vector = {:#06x}\n", self.boot_vector));
        let mut push = |name: &str, r: Region| {
            out.push_str(&format!(
                "\n[region.{name}]\nstart = {:#06x}\nlength = {:#x}\n",
                r.start, r.len
            ));
        };
        for (name, r) in self.named() {
            push(name, r);
        }
        push("key", self.key);
        push("swatt", self.swatt);
        out
    }

    pub fn from_sidecar(text: &str) -> Result<Self, MapError> {
        let value: toml::Value = text.parse().map_err(|e: toml::de::Error| MapError::Parse(e.to_string()))?;
        let int = |v: Option<&toml::Value>, what: &str| -> Result<i64, MapError> {
            v.and_then(|v| v.as_integer())
                .ok_or_else(|| MapError::Parse(format!("missing integer {what}")))
        };
        let regions = value
            .get("region")
            .ok_or_else(|| MapError::Parse("missing [region.*] tables".into()))?;
        let region = |name: &str| -> Result<Region, MapError> {
            let t = regions
                .get(name)
                .ok_or_else(|| MapError::Parse(format!("missing region {name}")))?;
            let start = int(t.get("start"), "start")?;
            let len = int(t.get("length"), "length")?;
            if !(0..=0xFFFF).contains(&start) || !(0..=0x10000).contains(&len) || start + len > 0x10000 {
                return Err(MapError::Parse(format!("region {name} out of range")));
            }
            Ok(Region::new(start as u16, len as u32))
        };
        let map = MemoryMap {
            rom: region("rom")?,
            pmem: region("pmem")?,
            dmem: region("dmem")?,
            periph: region("periph")?,
            monitor: region("monitor")?,
            key: region("key")?,
            swatt: region("swatt")?,
            boot_vector: int(value.get("boot_vector"), "boot_vector")? as u16,
        };
        map.validate()?;
        Ok(map)
    }
}

/// A raw binary image plus the map it was built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub bytes: Vec<u8>,
    pub map: MemoryMap,
}

impl Image {
    /// Writes `<stem>.bin` and `<stem>.map` next to each other.
    pub fn save(&self, bin_path: &Path) -> Result<(), MapError> {
        std::fs::write(bin_path, &self.bytes)?;
        std::fs::write(bin_path.with_extension("map"), self.map.to_sidecar())?;
        Ok(())
    }

    pub fn load(bin_path: &Path) -> Result<Self, MapError> {
        let bytes = std::fs::read(bin_path)?;
        let map_path = bin_path.with_extension("map");
        let map = if map_path.exists() {
            MemoryMap::from_sidecar(&std::fs::read_to_string(map_path)?)?
        } else {
            MemoryMap::default()
        };
        Ok(Image { bytes, map })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_is_valid() {
        let map = MemoryMap::default();
        map.validate().unwrap();
        assert_eq!(map.pmem, Region::new(0x1000, 0x2000));
        assert_eq!(map.key, Region::inclusive(0x0FE0, 0x0FFF));
        assert_eq!(map.swatt_exit(), 0x080E);
        assert!(map.is_mapped(page::LMT.start));
        assert!(!map.is_mapped(0x8000));
    }

    #[test]
    fn sidecar_round_trip() {
        for size in [0x400, 0x800, 0x1000, 0x2000] {
            let map = MemoryMap::with_pmem_size(size);
            assert_eq!(MemoryMap::from_sidecar(&map.to_sidecar()).unwrap(), map);
        }
    }

    #[test]
    fn overlapping_regions_rejected() {
        let mut map = MemoryMap::default();
        map.dmem = Region::new(0x2000, 0x2000);
        assert!(matches!(map.validate(), Err(MapError::Overlap("pmem", "dmem"))));
        let mut map = MemoryMap::default();
        map.key = Region::new(0x1000, 32);
        assert!(matches!(map.validate(), Err(MapError::NotInRom("key"))));
    }
}
