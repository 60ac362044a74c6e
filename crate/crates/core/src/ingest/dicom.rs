use std::path::Path;

use dicom_core::value::PrimitiveValue;
use dicom_core::{DataElement, VR};
use dicom_dictionary_std::{tags, uids};
use dicom_object::meta::FileMetaTableBuilder;
use dicom_object::{open_file, InMemDicomObject};

use crate::error::{Error, Result};
use crate::model::{ImageRecord, PixelSpacing, Split, Window};

/// Reads a single-frame grayscale DICOM file.
///
/// The image id is the file stem. Pixel spacing comes from PixelSpacing,
/// falling back to ImagerPixelSpacing (common on projection radiographs);
/// when neither is present the record is returned uncalibrated.
pub fn load_dicom(path: impl AsRef<Path>) -> Result<ImageRecord> {
    let path = path.as_ref();
    let fail = |reason: String| Error::ingest(path, reason);
    let obj = open_file(path).map_err(|e| fail(format!("cannot parse DICOM: {e}")))?;

    let int = |tag, name: &str| -> Result<u32> {
        obj.element(tag)
            .map_err(|_| fail(format!("missing {name}")))?
            .to_int::<u32>()
            .map_err(|e| fail(format!("bad {name}: {e}")))
    };
    let rows = int(tags::ROWS, "Rows")?;
    let cols = int(tags::COLUMNS, "Columns")?;
    let bits_allocated = int(tags::BITS_ALLOCATED, "BitsAllocated")?;
    let bits_stored = obj
        .element_opt(tags::BITS_STORED)
        .ok()
        .flatten()
        .and_then(|e| e.to_int::<u32>().ok())
        .unwrap_or(bits_allocated);
    if let Some(spp) = obj.element_opt(tags::SAMPLES_PER_PIXEL).ok().flatten() {
        if spp.to_int::<u32>().unwrap_or(1) != 1 {
            return Err(fail("only single-sample grayscale images are supported".into()));
        }
    }
    if let Some(frames) = obj.element_opt(tags::NUMBER_OF_FRAMES).ok().flatten() {
        if frames.to_int::<u32>().unwrap_or(1) > 1 {
            return Err(fail("multi-frame images are not supported".into()));
        }
    }
    let signed = obj
        .element_opt(tags::PIXEL_REPRESENTATION)
        .ok()
        .flatten()
        .and_then(|e| e.to_int::<u32>().ok())
        .unwrap_or(0)
        == 1;
    if signed {
        return Err(fail("signed pixel representation is not supported".into()));
    }
    let monochrome1 = obj
        .element_opt(tags::PHOTOMETRIC_INTERPRETATION)
        .ok()
        .flatten()
        .and_then(|e| e.to_str().ok().map(|s| s.trim().to_string()))
        .is_some_and(|s| s == "MONOCHROME1");

    let pixel_elem = obj
        .element(tags::PIXEL_DATA)
        .map_err(|_| fail("missing pixel data".into()))?;
    if pixel_elem.value().fragments().is_some() {
        return Err(fail("encapsulated (compressed) pixel data is not supported".into()));
    }
    let n = rows as usize * cols as usize;
    let mut pixels: Vec<u16> = match (bits_allocated, pixel_elem.value().primitive()) {
        (16, Some(PrimitiveValue::U16(v))) => v.to_vec(),
        (16, Some(p)) => p
            .to_bytes()
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect(),
        (8, Some(p)) => p.to_bytes().iter().map(|&b| b as u16).collect(),
        (b, _) => return Err(fail(format!("unsupported BitsAllocated {b}"))),
    };
    if pixels.len() < n {
        return Err(fail(format!("pixel data holds {} values, expected {n}", pixels.len())));
    }
    pixels.truncate(n);
    let bit_depth = bits_stored.clamp(1, bits_allocated) as u8;
    let max_value = if bit_depth >= 16 { u16::MAX } else { (1u16 << bit_depth) - 1 };
    for p in &mut pixels {
        *p &= max_value;
        if monochrome1 {
            *p = max_value - *p;
        }
    }

    let spacing = [tags::PIXEL_SPACING, tags::IMAGER_PIXEL_SPACING]
        .into_iter()
        .find_map(|tag| {
            let v = obj.element_opt(tag).ok().flatten()?.to_multi_float64().ok()?;
            match v.as_slice() {
                [r, c, ..] => PixelSpacing::new(*r, *c).ok(),
                [s] => PixelSpacing::isotropic(*s).ok(),
                [] => None,
            }
        });
    if spacing.is_none() {
        log::warn!("{}: no pixel spacing, image is uncalibrated", path.display());
    }
    let first_float = |tag| -> Option<f64> {
        obj.element_opt(tag).ok().flatten()?.to_multi_float64().ok()?.first().copied()
    };
    let window = match (first_float(tags::WINDOW_CENTER), first_float(tags::WINDOW_WIDTH)) {
        (Some(center), Some(width)) if width >= 1.0 => Some(Window { center, width }),
        _ => None,
    };

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let mut rec = ImageRecord {
        id,
        width: cols,
        height: rows,
        bit_depth,
        pixels,
        spacing,
        window,
        split: Split::Unassigned,
    };
    if monochrome1 {
        // the window applies to the stored values, which were just inverted
        if let Some(w) = &mut rec.window {
            w.center = max_value as f64 - w.center;
        }
    }
    rec.validate().map_err(|e| fail(e.to_string()))?;
    Ok(rec)
}

fn ds(values: &[f64]) -> PrimitiveValue {
    PrimitiveValue::Strs(values.iter().map(|v| format!("{v}")).collect())
}

/// Writes an uncompressed explicit-VR little-endian DICOM file.
///
/// Only meant for synthetic fixtures; the output carries the minimum
/// attribute set that [`load_dicom`] needs plus identifying UIDs.
pub fn write_dicom(path: impl AsRef<Path>, rec: &ImageRecord) -> Result<()> {
    let path = path.as_ref();
    rec.validate()?;
    let bits_allocated: u16 = if rec.bit_depth <= 8 { 8 } else { 16 };
    let instance_uid = format!("2.25.{}", fnv1a(rec.id.as_bytes()));
    let mut elements = vec![
        DataElement::new(tags::SOP_CLASS_UID, VR::UI, uids::DIGITAL_X_RAY_IMAGE_STORAGE_FOR_PRESENTATION),
        DataElement::new(tags::SOP_INSTANCE_UID, VR::UI, instance_uid.as_str()),
        DataElement::new(tags::MODALITY, VR::CS, "DX"),
        DataElement::new(tags::PATIENT_ID, VR::LO, rec.id.as_str()),
        DataElement::new(tags::SAMPLES_PER_PIXEL, VR::US, PrimitiveValue::from(1u16)),
        DataElement::new(tags::PHOTOMETRIC_INTERPRETATION, VR::CS, "MONOCHROME2"),
        DataElement::new(tags::ROWS, VR::US, PrimitiveValue::from(rec.height as u16)),
        DataElement::new(tags::COLUMNS, VR::US, PrimitiveValue::from(rec.width as u16)),
        DataElement::new(tags::BITS_ALLOCATED, VR::US, PrimitiveValue::from(bits_allocated)),
        DataElement::new(tags::BITS_STORED, VR::US, PrimitiveValue::from(rec.bit_depth as u16)),
        DataElement::new(tags::HIGH_BIT, VR::US, PrimitiveValue::from(rec.bit_depth as u16 - 1)),
        DataElement::new(tags::PIXEL_REPRESENTATION, VR::US, PrimitiveValue::from(0u16)),
    ];
    if rec.width > u16::MAX as u32 || rec.height > u16::MAX as u32 {
        return Err(Error::Validation("image too large for DICOM Rows/Columns".into()));
    }
    if let Some(s) = rec.spacing {
        elements.push(DataElement::new(tags::PIXEL_SPACING, VR::DS, ds(&[s.row_mm, s.col_mm])));
    }
    if let Some(w) = rec.window {
        elements.push(DataElement::new(tags::WINDOW_CENTER, VR::DS, ds(&[w.center])));
        elements.push(DataElement::new(tags::WINDOW_WIDTH, VR::DS, ds(&[w.width])));
    }
    let pixel_value = if bits_allocated == 8 {
        let mut bytes: Vec<u8> = rec.pixels.iter().map(|&p| p.min(255) as u8).collect();
        if bytes.len() % 2 == 1 {
            bytes.push(0);
        }
        DataElement::new(tags::PIXEL_DATA, VR::OB, PrimitiveValue::U8(bytes.into()))
    } else {
        DataElement::new(tags::PIXEL_DATA, VR::OW, PrimitiveValue::U16(rec.pixels.iter().copied().collect()))
    };
    elements.push(pixel_value);

    let obj = InMemDicomObject::from_element_iter(elements)
        .with_meta(FileMetaTableBuilder::new().transfer_syntax(uids::EXPLICIT_VR_LITTLE_ENDIAN))
        .map_err(|e| Error::ingest(path, format!("cannot build file meta: {e}")))?;
    obj.write_to_file(path)
        .map_err(|e| Error::ingest(path, format!("cannot write DICOM: {e}")))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
