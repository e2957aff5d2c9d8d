use std::path::PathBuf;

use actens::data::{
    dataset_from_idx, encode_idx_u8, load_dataset, parse_csv_dataset, parse_idx, parse_shape,
    DataSource, IdxType, IDX_IMAGES_MAGIC,
};
use actens::{Error, Location};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn digits_source() -> DataSource {
    DataSource::Idx(fixture("digits16-images.idx"), fixture("digits16-labels.idx"))
}

#[test]
fn digits_fixture_loads() {
    let d = load_dataset(&digits_source(), None, None).unwrap();
    assert_eq!(d.len(), 1000);
    assert_eq!(d.sample_shape(), [1, 16, 16]);
    assert_eq!(d.classes(), 10);
    let mut counts = [0usize; 10];
    d.labels().iter().for_each(|&l| counts[l] += 1);
    assert!(counts.iter().all(|&c| (95..=105).contains(&c)), "{counts:?}");
    assert!(d.features().iter().all(|&v| (0.0..=255.0).contains(&v)));
    assert_eq!(digits_source().name(), "digits16-images");
}

#[test]
fn idx_header_by_hand() {
    let bytes = std::fs::read(fixture("digits16-images.idx")).unwrap();
    assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()), IDX_IMAGES_MAGIC);
    let arr = parse_idx(&bytes).unwrap();
    assert_eq!(arr.elem, IdxType::U8);
    assert_eq!(arr.dims, vec![1000, 16, 16]);
    assert_eq!(arr.data[0], f64::from(bytes[16]));
}

#[test]
fn normalization_to_max_input() {
    let d = load_dataset(&digits_source(), None, Some(1.0)).unwrap();
    let max = d.features().iter().copied().fold(f64::MIN, f64::max);
    let min = d.features().iter().copied().fold(f64::MAX, f64::min);
    assert_eq!((min, max), (0.0, 1.0));
}

#[test]
fn idx_round_trip_and_typed_payloads() {
    let enc = encode_idx_u8(&[2, 3], &[1, 2, 3, 4, 5, 6]);
    let arr = parse_idx(&enc).unwrap();
    assert_eq!(arr.dims, vec![2, 3]);
    assert_eq!(arr.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

    // big-endian i16 vector [-2, 300]
    let i16s = [0u8, 0, 0x0B, 1, 0, 0, 0, 2, 0xFF, 0xFE, 0x01, 0x2C];
    assert_eq!(parse_idx(&i16s).unwrap().data, vec![-2.0, 300.0]);
    // f64 scalar list [1.5]
    let mut f64s = vec![0u8, 0, 0x0E, 1, 0, 0, 0, 1];
    f64s.extend(1.5f64.to_be_bytes());
    assert_eq!(parse_idx(&f64s).unwrap().data, vec![1.5]);
}

#[test]
fn idx_errors_carry_offsets() {
    let bad_magic = [1u8, 0, 0x08, 1, 0, 0, 0, 1, 7];
    assert!(matches!(parse_idx(&bad_magic), Err(Error::Parse { location: Location::Offset(0), .. })));
    let bad_type = [0u8, 0, 0x07, 1, 0, 0, 0, 1, 7];
    assert!(matches!(parse_idx(&bad_type), Err(Error::Parse { location: Location::Offset(2), .. })));
    let short = [0u8, 0, 0x08, 1, 0, 0, 0, 3, 7];
    assert!(matches!(parse_idx(&short), Err(Error::Parse { .. })));
    let trailing = [0u8, 0, 0x08, 1, 0, 0, 0, 1, 7, 9];
    assert!(matches!(parse_idx(&trailing), Err(Error::Parse { .. })));
    assert!(parse_idx(&[]).is_err());
}

#[test]
fn idx_label_validation() {
    let images = parse_idx(&encode_idx_u8(&[2, 1, 1], &[3, 4])).unwrap();
    let labels = parse_idx(&encode_idx_u8(&[2], &[0, 1])).unwrap();
    let d = dataset_from_idx(&images, &labels).unwrap();
    assert_eq!(d.classes(), 2);
    let three = parse_idx(&encode_idx_u8(&[3], &[0, 1, 1])).unwrap();
    assert!(dataset_from_idx(&images, &three).unwrap_err().is_validation());
}

#[test]
fn csv_two_samples() {
    let d = parse_csv_dataset("1.0,2.0,0\n3.0,4.0,1").unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.sample_shape(), [2, 1, 1]);
    assert_eq!(d.classes(), 2);
    assert_eq!(d.features(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn csv_errors() {
    assert!(matches!(parse_csv_dataset(""), Err(Error::Parse { .. })));
    match parse_csv_dataset("1,2,0\n1,x,1\n") {
        Err(Error::Parse { location: Location::Line(2), .. }) => {}
        other => panic!("expected a line-2 parse error, got {other:?}"),
    }
    match parse_csv_dataset("1,2,0\n1,2,3,1\n") {
        Err(Error::Parse { location: Location::Line(2), .. }) => {}
        other => panic!("expected a line-2 parse error, got {other:?}"),
    }
    assert!(matches!(parse_csv_dataset("1,2,-1\n"), Err(Error::Validation(_))));
    assert!(matches!(parse_csv_dataset("1,2,0.5\n"), Err(Error::Validation(_))));
}

#[test]
fn csv_reshape() {
    let d = parse_csv_dataset("1,2,3,4,0\n5,6,7,8,1\n").unwrap().reshape(parse_shape("1x2x2").unwrap()).unwrap();
    assert_eq!(d.sample_shape(), [1, 2, 2]);
    assert!(parse_csv_dataset("1,2,3,0\n").unwrap().reshape([1, 2, 2]).is_err());
    assert!(parse_shape("2x2").is_err());
    assert!(parse_shape("0x2x2").is_err());
}

#[test]
fn data_source_forms() {
    assert_eq!(DataSource::parse("a.csv").unwrap(), DataSource::Csv("a.csv".into()));
    assert_eq!(
        DataSource::parse("i.idx,l.idx").unwrap(),
        DataSource::Idx("i.idx".into(), "l.idx".into())
    );
    assert!(DataSource::parse(",l.idx").is_err());
    let missing = load_dataset(&DataSource::parse("/nonexistent/x.csv").unwrap(), None, None);
    assert!(matches!(missing, Err(Error::Io(_))));
}
