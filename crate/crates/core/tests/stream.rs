use gwgls_core::counters::FlopIoCounters;
use gwgls_core::engine::{precompute_grid, ResultTile};
use gwgls_core::nalgebra::DMatrix;
use gwgls_core::stream::{
    open_stream, preloop_stream_transform, Buffering, StreamHeader, StreamKind, StreamWriter, TransformTarget,
};
use gwgls_core::{Error, TraitScalars};
use proptest::prelude::*;

fn write_snps(path: &std::path::Path, n: usize, m: usize, values: &[f64]) {
    let w = StreamWriter::create(path, StreamHeader::snp(n, m)).unwrap();
    w.write_columns(0, values).unwrap();
    w.finish().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>(), 16 * 32)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gwg");
        write_snps(&path, 16, 32, &values);
        let r = open_stream(&path, StreamKind::Snp).unwrap();
        prop_assert_eq!((r.n(), r.count()), (16, 32));
        let back = r.read_slab(0, 32).unwrap();
        prop_assert!(back.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn slabs_partition_the_stream(split in 0usize..=32, start in 0usize..32, width in 1usize..=32) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.gwg");
        let values: Vec<f64> = (0..16 * 32).map(|k| k as f64 * 0.25).collect();
        write_snps(&path, 16, 32, &values);
        let r = open_stream(&path, StreamKind::Snp).unwrap();
        let whole = r.read_slab(0, 32).unwrap();
        let mut joined = if split > 0 { r.read_slab(0, split).unwrap() } else { Vec::new() };
        if split < 32 {
            joined.extend(r.read_slab(split, 32 - split).unwrap());
        }
        prop_assert_eq!(&joined, &whole);
        let width = width.min(32 - start);
        prop_assert_eq!(r.read_slab(start, width).unwrap(), whole[start * 16..(start + width) * 16].to_vec());
    }
}

#[test]
fn header_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.gwg");
    write_snps(&path, 4, 10, &[0.5; 40]);
    let r = open_stream(&path, StreamKind::Snp).unwrap();
    assert_eq!((r.n(), r.count()), (4, 10));
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 64 + 40 * 8);
}

#[test]
fn truncated_payload_reports_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.gwg");
    write_snps(&path, 4, 10, &[1.0; 40]);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    match open_stream(&path, StreamKind::Snp) {
        Err(Error::TruncatedFile { expected, actual, .. }) => {
            assert_eq!(expected, 64 + 320);
            assert_eq!(actual, 64 + 312);
        }
        other => panic!("expected TruncatedFile, got {other:?}"),
    }
}

#[test]
fn header_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.gwg");
    write_snps(&path, 4, 10, &[1.0; 40]);
    assert!(matches!(
        open_stream(&path, StreamKind::Trait),
        Err(Error::KindMismatch { found: 1, expected: 2, .. })
    ));
    let good = std::fs::read(&path).unwrap();

    let mut bad = good.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(open_stream(&path, StreamKind::Snp), Err(Error::BadMagic { .. })));

    let mut bad = good.clone();
    bad[4] = 2;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(
        open_stream(&path, StreamKind::Snp),
        Err(Error::VersionMismatch { found: 2, expected: 1, .. })
    ));

    std::fs::write(&path, &good[..30]).unwrap();
    assert!(matches!(open_stream(&path, StreamKind::Snp), Err(Error::TruncatedFile { .. })));
}

#[test]
fn result_tiles_land_at_cell_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.gwg");
    let (m, t, p) = (5usize, 3usize, 2usize);
    let w = StreamWriter::create(&path, StreamHeader::result(m, t, p)).unwrap();

    let mut corner = ResultTile::new((0, 0), 1, 1, p);
    corner.data.copy_from_slice(&[7.0, 8.0]);
    w.write_result_tile(&corner).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[64..72], &7.0f64.to_le_bytes());

    let value = |i: usize, j: usize, c: usize| (100 * j + 10 * i + c) as f64;
    for (i0, rows) in [(0usize, 3usize), (3, 2)] {
        for j0 in 0..t {
            let mut tile = ResultTile::new((i0, j0), rows, 1, p);
            for ii in 0..rows {
                for c in 0..p {
                    tile.data[ii * p + c] = value(i0 + ii, j0, c);
                }
            }
            w.write_result_tile(&tile).unwrap();
        }
    }
    let outside = ResultTile::new((4, 2), 2, 1, p);
    assert!(w.write_result_tile(&outside).is_err());
    w.finish().unwrap();

    let r = open_stream(&path, StreamKind::Result).unwrap();
    for j in 0..t {
        for i in 0..m {
            assert_eq!(r.read_cell(i, j).unwrap(), vec![value(i, j, 0), value(i, j, 1)]);
        }
    }
}

#[test]
fn trait_scalars_follow_payload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.gwg");
    let w = StreamWriter::create(&path, StreamHeader::traits(3, 2)).unwrap();
    w.write_columns(0, &[1.0; 6]).unwrap();
    let sc = [TraitScalars::new(0.25, 2.0).unwrap(), TraitScalars::new(0.0, 0.5).unwrap()];
    w.write_scalars(0, &sc).unwrap();
    w.finish().unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 64 + (6 + 4) * 8);
    let at = |k: usize| f64::from_le_bytes(bytes[64 + 8 * k..72 + 8 * k].try_into().unwrap());
    assert_eq!([at(6), at(7), at(8), at(9)], [0.25, 0.0, 2.0, 0.5]);
    let (back, _) = open_stream(&path, StreamKind::Trait).unwrap().read_scalars(0, 2).unwrap();
    assert_eq!(back, sc.to_vec());
}

#[test]
fn identity_transform_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("s.gwg");
    let (n, m) = (6usize, 11usize);
    let values: Vec<f64> = (0..n * m).map(|k| (k as f64).sin()).collect();
    write_snps(&raw, n, m, &values);
    let pre = precompute_grid(&DMatrix::identity(n, n), &DMatrix::zeros(n, 1), &mut FlopIoCounters::default()).unwrap();
    let out = dir.path().join("t.gwg");
    let mut counters = FlopIoCounters::default();
    preloop_stream_transform(&raw, StreamKind::Snp, TransformTarget::Sibling(&out), &pre, 4, Buffering::Double, &mut counters)
        .unwrap();
    assert_eq!(std::fs::read(&raw).unwrap(), std::fs::read(&out).unwrap());
    // flops over transferred elements is n
    let elements = (counters.bytes_loaded + counters.bytes_stored) / 8;
    assert_eq!(counters.preloop_flops / elements, n as u64);
}

#[test]
fn partial_slab_transform_matches_in_core() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("s.gwg");
    let (n, m) = (9usize, 10usize);
    let values: Vec<f64> = (0..n * m).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
    write_snps(&raw, n, m, &values);
    let phi = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.3f64.powi((i as i32 - j as i32).abs()) });
    let pre = precompute_grid(&phi, &DMatrix::zeros(n, 1), &mut FlopIoCounters::default()).unwrap();
    let mut expected = vec![0.0; n * m];
    pre.spectrum.transform(m, &values, &mut expected);
    for (nb, buffering) in [(3usize, Buffering::Double), (4, Buffering::Single), (10, Buffering::Double)] {
        let out = dir.path().join(format!("t{nb}.gwg"));
        preloop_stream_transform(&raw, StreamKind::Snp, TransformTarget::Sibling(&out), &pre, nb, buffering, &mut FlopIoCounters::default())
            .unwrap();
        assert_eq!(open_stream(&out, StreamKind::Snp).unwrap().read_slab(0, m).unwrap(), expected);
    }
}
