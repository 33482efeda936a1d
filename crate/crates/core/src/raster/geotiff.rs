//! Single-band GeoTIFF support (`geotiff` feature).
//!
//! Georeferencing uses the pixel-scale and tie-point tags only. The tie point
//! is written at the lower-left raster corner `(0, nrows)` so the header origin
//! survives a round trip exactly. The CRS tag rides in ImageDescription and
//! nodata in the GDAL nodata tag.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;
use tiff::TiffError;

use super::{ClassGrid, FloatGrid, GridHeader};
use crate::error::{Error, Result};

fn tiff_err(path: &Path, e: TiffError) -> Error {
    Error::parse(path.display().to_string(), e.to_string())
}

pub(super) fn read(path: &Path) -> Result<FloatGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(file)
        .map_err(|e| tiff_err(path, e))?
        .with_limits(Limits::unlimited());
    let (ncols, nrows) = dec.dimensions().map_err(|e| tiff_err(path, e))?;
    if dec
        .find_tag(Tag::ModelTransformationTag)
        .map_err(|e| tiff_err(path, e))?
        .is_some()
    {
        return Err(Error::UnsupportedFormat(format!(
            "{}: affine/rotated GeoTIFF transforms are not supported",
            path.display()
        )));
    }
    let scale = dec
        .get_tag_f64_vec(Tag::ModelPixelScaleTag)
        .map_err(|e| tiff_err(path, e))?;
    let tie = dec
        .get_tag_f64_vec(Tag::ModelTiepointTag)
        .map_err(|e| tiff_err(path, e))?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(Error::parse(path.display().to_string(), "incomplete georeferencing tags"));
    }
    if scale[0] != scale[1] {
        return Err(Error::UnsupportedFormat(format!(
            "{}: non-square pixels",
            path.display()
        )));
    }
    let cell_size = scale[0];
    let (i, j, x, y) = (tie[0], tie[1], tie[3], tie[4]);
    let origin_x = x - i * cell_size;
    let origin_y = y - (nrows as f64 - j) * cell_size;
    let nodata_value = match dec.find_tag(Tag::GdalNodata).map_err(|e| tiff_err(path, e))? {
        Some(_) => {
            let s = dec
                .get_tag_ascii_string(Tag::GdalNodata)
                .map_err(|e| tiff_err(path, e))?;
            s.trim_end_matches('\0').trim().parse().map_err(|_| {
                Error::parse(path.display().to_string(), format!("bad nodata `{s}`"))
            })?
        }
        None => -9999.0,
    };
    let crs_tag = match dec.find_tag(Tag::ImageDescription).map_err(|e| tiff_err(path, e))? {
        Some(_) => dec
            .get_tag_ascii_string(Tag::ImageDescription)
            .map_err(|e| tiff_err(path, e))?,
        None => String::new(),
    };
    let cells: Vec<f64> = match dec.read_image().map_err(|e| tiff_err(path, e))? {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unsupported sample type",
                path.display()
            )))
        }
    };
    let header = GridHeader {
        ncols: ncols as usize,
        nrows: nrows as usize,
        cell_size,
        origin_x,
        origin_y,
        crs_tag,
        nodata_value,
    };
    if cells.len() != header.len() {
        return Err(Error::UnsupportedFormat(format!(
            "{}: multi-band images must be read band by band",
            path.display()
        )));
    }
    FloatGrid::new(header, cells)
}

macro_rules! write_band {
    ($path:expr, $header:expr, $color:ty, $data:expr) => {{
        let path: &Path = $path;
        let header: &GridHeader = $header;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| tiff_err(path, e))?;
        let mut image = enc
            .new_image::<$color>(header.ncols as u32, header.nrows as u32)
            .map_err(|e| tiff_err(path, e))?;
        let dir = image.encoder();
        dir.write_tag(
            Tag::ModelPixelScaleTag,
            &[header.cell_size, header.cell_size, 0.0][..],
        )
        .map_err(|e| tiff_err(path, e))?;
        dir.write_tag(
            Tag::ModelTiepointTag,
            &[0.0, header.nrows as f64, 0.0, header.origin_x, header.origin_y, 0.0][..],
        )
        .map_err(|e| tiff_err(path, e))?;
        dir.write_tag(Tag::GdalNodata, format!("{}", header.nodata_value).as_str())
            .map_err(|e| tiff_err(path, e))?;
        if !header.crs_tag.is_empty() {
            dir.write_tag(Tag::ImageDescription, header.crs_tag.as_str())
                .map_err(|e| tiff_err(path, e))?;
        }
        image.write_data($data).map_err(|e| tiff_err(path, e))?;
        Ok(())
    }};
}

pub(super) fn write_float(grid: &FloatGrid, path: &Path) -> Result<()> {
    write_band!(path, grid.header(), colortype::Gray64Float, grid.cells())
}

pub(super) fn write_class(grid: &ClassGrid, path: &Path) -> Result<()> {
    write_band!(path, grid.header(), colortype::Gray8, grid.cells())
}
