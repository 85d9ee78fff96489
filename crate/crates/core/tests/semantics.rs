use fdb_core::backends::KvCatalogueOptions;
use fdb_core::testkit::{self, Backend, EmbeddedKv, TocBackend};
use fdb_core::Fdb;

#[test]
fn semantics_on_every_backend() {
    let dir = tempfile::tempdir().unwrap();
    for backend in testkit::all_backends(dir.path()) {
        testkit::fdb_semantics(backend.as_ref());
    }
}

#[test]
fn semantics_without_axis_pruning() {
    let dir = tempfile::tempdir().unwrap();
    let mut kv = EmbeddedKv::new(dir.path());
    kv.options.axis_pruning = false;
    testkit::fdb_semantics(&kv);
}

#[test]
fn list_matches_brute_force_on_kv() {
    let dir = tempfile::tempdir().unwrap();
    for pruning in [true, false] {
        let kv = EmbeddedKv {
            options: KvCatalogueOptions {
                axis_pruning: pruning,
                ..Default::default()
            },
            ..EmbeddedKv::new(dir.path())
        };
        // dataset containers are shared within a pool, so each schema gets its own
        let open = |schema: &fdb_core::Schema, inst: usize| {
            let options = KvCatalogueOptions {
                pool: format!("pool-{pruning}-{inst}"),
                ..kv.options.clone()
            };
            Fdb::kv(kv.engine.clone(), schema.clone(), options, 64, Default::default())
        };
        let n = testkit::list_oracle(&open, 6, 300, 50, 11).unwrap();
        assert_eq!(n, 300);
    }
}

#[test]
fn list_matches_brute_force_on_toc() {
    let dir = tempfile::tempdir().unwrap();
    let open = |schema: &fdb_core::Schema, inst: usize| {
        TocBackend {
            root: dir.path().join(inst.to_string()),
        }
        .open(schema)
    };
    assert_eq!(testkit::list_oracle(&open, 6, 300, 50, 12).unwrap(), 300);
}
