//! Gridded annual-maximum ingestion: CSV loading, boundary deduplication,
//! year exclusion, and the covariate series.
//!
//! Rainfall CSV format: `pixel_id,lat,lon,region,year,value` (UTF-8, comma,
//! dot decimal). Pixels replicated across region boundaries are collapsed by
//! [`dedup_boundary`], which keeps the maximum value per (pixel, year); a
//! duplicate (pixel, year) *within* one region is treated as corrupt input
//! and rejected with its row number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Administrative region label. Declaration order is the tie-break order
/// used by [`dedup_boundary`] and for majority-label ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    North,
    Center,
    South,
    East,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::North, Region::Center, Region::South, Region::East];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::North => "North",
            Region::Center => "Center",
            Region::South => "South",
            Region::East => "East",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        match s {
            "North" => Some(Region::North),
            "Center" => Some(Region::Center),
            "South" => Some(Region::South),
            "East" => Some(Region::East),
            _ => None,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One raw CSV row (pre-deduplication). `line` is the 1-based file line.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub pixel_id: u64,
    pub lat: f64,
    pub lon: f64,
    pub region: Region,
    pub year: i32,
    pub value: f64,
    pub line: u64,
}

/// Annual-maximum series at one pixel. Values align with the owning
/// [`Grid`]'s year axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub pixel_id: u64,
    pub lat: f64,
    pub lon: f64,
    pub region: Region,
    pub values: Vec<f64>,
}

/// A collection of pixel series sharing one strictly increasing year axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub years: Vec<i32>,
    pub series: Vec<GridSeries>,
}

impl Grid {
    pub fn n_pixels(&self) -> usize {
        self.series.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    /// Copy of the grid with the given years dropped from every series.
    pub fn exclude_years(&self, drop: &[i32]) -> Grid {
        let keep: Vec<usize> = (0..self.years.len())
            .filter(|&i| !drop.contains(&self.years[i]))
            .collect();
        Grid {
            years: keep.iter().map(|&i| self.years[i]).collect(),
            series: self
                .series
                .iter()
                .map(|s| GridSeries {
                    pixel_id: s.pixel_id,
                    lat: s.lat,
                    lon: s.lon,
                    region: s.region,
                    values: keep.iter().map(|&i| s.values[i]).collect(),
                })
                .collect(),
        }
    }
}

/// Reference-temperature covariate, optionally with a smoothed version
/// (filled in by the EDA stage before fitting).
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSeries {
    pub years: Vec<i32>,
    pub raw: Vec<f64>,
    pub smoothed: Option<Vec<f64>>,
}

impl CovariateSeries {
    /// Smoothed covariate aligned to `years`; errors if smoothing has not
    /// run or a requested year is absent.
    pub fn smoothed_for(&self, years: &[i32]) -> Result<Vec<f64>> {
        let sm = self
            .smoothed
            .as_ref()
            .ok_or_else(|| Error::Invalid("covariate has not been smoothed yet".into()))?;
        years
            .iter()
            .map(|y| {
                self.years
                    .iter()
                    .position(|cy| cy == y)
                    .map(|i| sm[i])
                    .ok_or_else(|| Error::Invalid(format!("covariate has no year {y}")))
            })
            .collect()
    }

    pub fn exclude_years(&self, drop: &[i32]) -> CovariateSeries {
        let keep: Vec<usize> = (0..self.years.len())
            .filter(|&i| !drop.contains(&self.years[i]))
            .collect();
        CovariateSeries {
            years: keep.iter().map(|&i| self.years[i]).collect(),
            raw: keep.iter().map(|&i| self.raw[i]).collect(),
            smoothed: self
                .smoothed
                .as_ref()
                .map(|sm| keep.iter().map(|&i| sm[i]).collect()),
        }
    }
}

fn ingest_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Ingest {
        line: line as usize,
        msg: msg.into(),
    }
}

/// Collapse region-boundary replicas: per (pixel, year) keep the record with
/// the maximum value; value ties keep the first label in [`Region`] order.
/// Output is sorted by (pixel, year). Idempotent; never fails.
pub fn dedup_boundary(records: Vec<RawRecord>) -> Vec<RawRecord> {
    let mut best: BTreeMap<(u64, i32), RawRecord> = BTreeMap::new();
    for r in records {
        match best.get_mut(&(r.pixel_id, r.year)) {
            None => {
                best.insert((r.pixel_id, r.year), r);
            }
            Some(cur) => {
                if r.value > cur.value || (r.value == cur.value && r.region < cur.region) {
                    *cur = r;
                }
            }
        }
    }
    best.into_values().collect()
}

fn parse_records<R: std::io::Read>(rdr: R) -> Result<Vec<RawRecord>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(rdr);
    let headers = csv.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingest_err(1, format!("missing column '{name}'")))
    };
    let (ci, cla, clo, cr, cy, cv) = (
        col("pixel_id")?,
        col("lat")?,
        col("lon")?,
        col("region")?,
        col("year")?,
        col("value")?,
    );

    let mut out = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| ingest_err(line, "short row"))
                .map(str::trim)
        };
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>()
                .map_err(|_| ingest_err(line, format!("non-numeric {name} '{s}'")))
        };
        let pixel_id = field(ci)?
            .parse::<u64>()
            .map_err(|_| ingest_err(line, format!("bad pixel_id '{}'", field(ci).unwrap())))?;
        let region_s = field(cr)?;
        let region = Region::parse(region_s)
            .ok_or_else(|| ingest_err(line, format!("unknown region '{region_s}'")))?;
        let year = field(cy)?
            .parse::<i32>()
            .map_err(|_| ingest_err(line, format!("bad year '{}'", field(cy).unwrap())))?;
        let value = num(cv, "value")?;
        if !value.is_finite() || value < 0.0 {
            return Err(ingest_err(line, format!("value must be finite and >= 0, got {value}")));
        }
        out.push(RawRecord {
            pixel_id,
            lat: num(cla, "lat")?,
            lon: num(clo, "lon")?,
            region,
            year,
            value,
            line,
        });
    }
    Ok(out)
}

/// Assemble deduplicated records into a [`Grid`], enforcing a common year
/// axis and consistent coordinates. The series region label is the majority
/// label over the pixel's surviving records (ties to [`Region`] order).
pub fn assemble_grid(records: Vec<RawRecord>) -> Result<Grid> {
    // reject same-region duplicates before boundary dedup: those are corrupt
    // input rather than boundary replicas
    let mut seen: BTreeMap<(u64, i32, Region), u64> = BTreeMap::new();
    for r in &records {
        if let Some(first) = seen.insert((r.pixel_id, r.year, r.region), r.line) {
            return Err(ingest_err(
                r.line,
                format!(
                    "duplicate (pixel {}, year {}) in region {} (first at line {first})",
                    r.pixel_id, r.year, r.region
                ),
            ));
        }
    }
    let records = dedup_boundary(records);
    if records.is_empty() {
        return Err(Error::Invalid("no data rows".into()));
    }

    let mut years: Vec<i32> = records.iter().map(|r| r.year).collect();
    years.sort_unstable();
    years.dedup();

    let mut by_pixel: BTreeMap<u64, Vec<&RawRecord>> = BTreeMap::new();
    for r in &records {
        by_pixel.entry(r.pixel_id).or_default().push(r);
    }

    let mut series = Vec::with_capacity(by_pixel.len());
    for (pixel_id, recs) in by_pixel {
        let (lat, lon) = (recs[0].lat, recs[0].lon);
        for r in &recs {
            if (r.lat - lat).abs() > 1e-9 || (r.lon - lon).abs() > 1e-9 {
                return Err(ingest_err(
                    r.line,
                    format!("pixel {pixel_id} has inconsistent coordinates"),
                ));
            }
        }
        let mut values = Vec::with_capacity(years.len());
        for &y in &years {
            match recs.iter().find(|r| r.year == y) {
                Some(r) => values.push(r.value),
                None => {
                    return Err(Error::Invalid(format!(
                        "pixel {pixel_id} is missing year {y}"
                    )))
                }
            }
        }
        let mut counts = [0usize; 4];
        for r in &recs {
            counts[r.region as usize] += 1;
        }
        let region = Region::ALL[(0..4).max_by_key(|&i| (counts[i], 4 - i)).unwrap()];
        series.push(GridSeries {
            pixel_id,
            lat,
            lon,
            region,
            values,
        });
    }
    Ok(Grid { years, series })
}

/// Load a rainfall grid CSV (see module docs for the format).
pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let file = std::fs::File::open(path)?;
    assemble_grid(parse_records(std::io::BufReader::new(file))?)
}

/// Write a grid in the `load_grid` format; `load_grid` of the output
/// reproduces the collection exactly (values round-trip through shortest
/// decimal text).
pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pixel_id", "lat", "lon", "region", "year", "value"])?;
    for s in &grid.series {
        for (i, &y) in grid.years.iter().enumerate() {
            w.write_record(&[
                s.pixel_id.to_string(),
                s.lat.to_string(),
                s.lon.to_string(),
                s.region.to_string(),
                y.to_string(),
                s.values[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a covariate CSV with header `year,value`, sorted by year.
pub fn load_covariate(path: impl AsRef<Path>) -> Result<CovariateSeries> {
    let file = std::fs::File::open(path)?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let headers = csv.headers()?.clone();
    let cy = headers
        .iter()
        .position(|h| h == "year")
        .ok_or_else(|| ingest_err(1, "missing column 'year'"))?;
    let cv = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| ingest_err(1, "missing column 'value'"))?;
    let mut rows: Vec<(i32, f64)> = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let year = rec
            .get(cy)
            .map(str::trim)
            .and_then(|s| s.parse::<i32>().ok())
            .ok_or_else(|| ingest_err(line, "bad year"))?;
        let value = rec
            .get(cv)
            .map(str::trim)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| ingest_err(line, "bad value"))?;
        if rows.iter().any(|&(y, _)| y == year) {
            return Err(ingest_err(line, format!("duplicate year {year}")));
        }
        rows.push((year, value));
    }
    if rows.is_empty() {
        return Err(Error::Invalid("covariate file has no rows".into()));
    }
    rows.sort_unstable_by_key(|&(y, _)| y);
    Ok(CovariateSeries {
        years: rows.iter().map(|&(y, _)| y).collect(),
        raw: rows.iter().map(|&(_, v)| v).collect(),
        smoothed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pixel: u64, region: Region, year: i32, value: f64, line: u64) -> RawRecord {
        RawRecord {
            pixel_id: pixel,
            lat: 23.5,
            lon: 121.0,
            region,
            year,
            value,
            line,
        }
    }

    // ----- dedup_boundary -----

    #[test]
    fn dedup_keeps_maximum_across_regions() {
        let out = dedup_boundary(vec![
            rec(7, Region::North, 2001, 10.0, 2),
            rec(7, Region::Center, 2001, 25.0, 3),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value, 25.0);
        assert_eq!(out[0].region, Region::Center);
    }

    #[test]
    fn dedup_tie_prefers_region_order() {
        let out = dedup_boundary(vec![
            rec(7, Region::South, 2001, 25.0, 2),
            rec(7, Region::North, 2001, 25.0, 3),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].region, Region::North);
    }

    #[test]
    fn dedup_single_record_unchanged_and_idempotent() {
        let one = vec![rec(1, Region::East, 1999, 3.0, 2)];
        assert_eq!(dedup_boundary(one.clone()), one);
        let many = vec![
            rec(1, Region::North, 2000, 5.0, 2),
            rec(1, Region::South, 2000, 9.0, 3),
            rec(2, Region::East, 2000, 4.0, 4),
        ];
        let once = dedup_boundary(many);
        let twice = dedup_boundary(once.clone());
        assert_eq!(once, twice);
    }

    // ----- load_grid / assemble_grid -----

    fn load_str(s: &str) -> Result<Grid> {
        assemble_grid(parse_records(s.as_bytes())?)
    }

    #[test]
    fn loads_two_pixels_by_three_years() {
        let g = load_str(
            "pixel_id,lat,lon,region,year,value\n\
             1,23.0,121.0,North,2000,10\n\
             1,23.0,121.0,North,2001,11\n\
             1,23.0,121.0,North,2002,12\n\
             2,23.1,121.0,South,2000,20\n\
             2,23.1,121.0,South,2001,21\n\
             2,23.1,121.0,South,2002,22\n",
        )
        .unwrap();
        assert_eq!(g.years, vec![2000, 2001, 2002]);
        assert_eq!(g.n_pixels(), 2);
        assert_eq!(g.series[0].values, vec![10.0, 11.0, 12.0]);
        assert_eq!(g.series[1].region, Region::South);
    }

    #[test]
    fn boundary_replica_resolves_to_maximum() {
        let g = load_str(
            "pixel_id,lat,lon,region,year,value\n\
             1,23.0,121.0,North,2000,10\n\
             1,23.0,121.0,Center,2000,25\n",
        )
        .unwrap();
        assert_eq!(g.series[0].values, vec![25.0]);
        assert_eq!(g.series[0].region, Region::Center);
    }

    #[test]
    fn missing_year_names_pixel_and_year() {
        let err = load_str(
            "pixel_id,lat,lon,region,year,value\n\
             1,23.0,121.0,North,2000,10\n\
             1,23.0,121.0,North,2001,11\n\
             2,23.1,121.0,North,2000,20\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains("2001"), "{msg}");
    }

    #[test]
    fn same_region_duplicate_is_an_error_with_line() {
        let err = load_str(
            "pixel_id,lat,lon,region,year,value\n\
             1,23.0,121.0,North,2000,10\n\
             1,23.0,121.0,North,2000,12\n",
        )
        .unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 3),
            other => panic!("expected ingest error, got {other}"),
        }
    }

    #[test]
    fn rejects_bad_cells_and_missing_columns() {
        assert!(load_str("pixel_id,lat,lon,region,year\n1,2,3,North,2000\n").is_err());
        assert!(load_str(
            "pixel_id,lat,lon,region,year,value\n1,23.0,121.0,North,2000,abc\n"
        )
        .is_err());
        assert!(load_str(
            "pixel_id,lat,lon,region,year,value\n1,23.0,121.0,Wet,2000,1\n"
        )
        .is_err());
        assert!(load_str(
            "pixel_id,lat,lon,region,year,value\n1,23.0,121.0,North,2000,-5\n"
        )
        .is_err());
    }

    #[test]
    fn majority_region_label_with_tie_order() {
        // 2 South years vs 1 North year -> South; 1:1 tie -> North
        let g = load_str(
            "pixel_id,lat,lon,region,year,value\n\
             1,23.0,121.0,South,2000,5\n\
             1,23.0,121.0,South,2001,6\n\
             1,23.0,121.0,North,2002,7\n",
        )
        .unwrap();
        assert_eq!(g.series[0].region, Region::South);
        let g = load_str(
            "pixel_id,lat,lon,region,year,value\n\
             1,23.0,121.0,South,2000,5\n\
             1,23.0,121.0,North,2001,6\n",
        )
        .unwrap();
        assert_eq!(g.series[0].region, Region::North);
    }

    #[test]
    fn write_then_load_is_identity() {
        let g = Grid {
            years: vec![2000, 2001],
            series: vec![
                GridSeries {
                    pixel_id: 3,
                    lat: 23.456789,
                    lon: 121.0001,
                    region: Region::East,
                    values: vec![10.125, 0.1 + 0.2], // 0.30000000000000004 round-trips
                },
                GridSeries {
                    pixel_id: 9,
                    lat: 24.0,
                    lon: 120.5,
                    region: Region::North,
                    values: vec![55.0, 61.75],
                },
            ],
        };
        let dir = std::env::temp_dir().join(format!("pgev-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("grid.csv");
        write_grid(&g, &path).unwrap();
        let back = load_grid(&path).unwrap();
        assert_eq!(back, g);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn exclude_years_drops_requested_columns() {
        let g = load_str(
            "pixel_id,lat,lon,region,year,value\n\
             1,23.0,121.0,North,2008,1\n\
             1,23.0,121.0,North,2009,2\n\
             1,23.0,121.0,North,2010,3\n",
        )
        .unwrap();
        let g2 = g.exclude_years(&[2009]);
        assert_eq!(g2.years, vec![2008, 2010]);
        assert_eq!(g2.series[0].values, vec![1.0, 3.0]);
    }

    // ----- covariate -----

    #[test]
    fn covariate_roundtrip_and_alignment() {
        let dir = std::env::temp_dir().join(format!("pgev-cov-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cov.csv");
        std::fs::write(&path, "year,value\n2001,0.5\n2000,0.25\n2002,0.75\n").unwrap();
        let mut cov = load_covariate(&path).unwrap();
        assert_eq!(cov.years, vec![2000, 2001, 2002]);
        assert_eq!(cov.raw, vec![0.25, 0.5, 0.75]);
        assert!(cov.smoothed_for(&[2000]).is_err()); // not smoothed yet
        cov.smoothed = Some(vec![0.3, 0.5, 0.7]);
        assert_eq!(cov.smoothed_for(&[2001, 2002]).unwrap(), vec![0.5, 0.7]);
        assert!(cov.smoothed_for(&[1999]).is_err());
        let cut = cov.exclude_years(&[2001]);
        assert_eq!(cut.years, vec![2000, 2002]);
        assert_eq!(cut.smoothed.unwrap(), vec![0.3, 0.7]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
