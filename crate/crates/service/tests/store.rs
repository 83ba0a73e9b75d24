use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use storymap_core::{AnimationBlock, BlockArgs, GeoPoint, Project, Timeline};
use storymap_service::store::{FaultPoint, ProjectStore, StoreError};

fn project(id: &str, zoom: f64) -> Project {
    let mut p = Project::new(id, "Zoom to Paris.", 1_000);
    p.timeline = Timeline::new(vec![AnimationBlock::new(
        "cam",
        0.0,
        2.5,
        BlockArgs::CameraZoom {
            target: GeoPoint::new(48.8566, 2.3522),
            zoom_level: zoom,
        },
    )]);
    p
}

#[tokio::test]
async fn write_then_load_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    let first = store.create(project("p1", 5.0)).await.unwrap();
    assert_eq!(first.revision, 1);
    let raw = store.raw("p1").unwrap();

    // A second store instance reads the same bytes and the same value.
    let reopened = ProjectStore::open(dir.path()).unwrap();
    let loaded = reopened.load("p1").unwrap();
    assert_eq!(*loaded, *first);
    assert_eq!(reopened.raw("p1").unwrap(), raw);
    assert_eq!(
        storymap_core::canonical::to_canonical_pretty(&*loaded).unwrap(),
        raw
    );
}

#[tokio::test]
async fn revisions_increase_by_one() {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    store.create(project("p1", 5.0)).await.unwrap();
    for n in 1..=5 {
        let s = store.save(n, project("p1", 5.0 + n as f64)).await.unwrap();
        assert_eq!(s.revision, n + 1);
    }
    assert!(matches!(
        store.save(3, project("p1", 1.0)).await,
        Err(StoreError::Conflict { expected: 3, current: 6, .. })
    ));
    assert!(matches!(store.create(project("p1", 1.0)).await, Err(StoreError::Exists(_))));
    assert_eq!(store.list().unwrap(), ["p1"]);
}

#[tokio::test]
async fn concurrent_writers_at_one_revision_admit_one() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ProjectStore::open(dir.path()).unwrap());
    store.create(project("p1", 5.0)).await.unwrap();
    let tasks: Vec<_> = (0..16)
        .map(|n| {
            let store = store.clone();
            tokio::spawn(async move { store.save(1, project("p1", n as f64)).await.is_ok() })
        })
        .collect();
    let mut wins = 0;
    for t in tasks {
        wins += t.await.unwrap() as usize;
    }
    assert_eq!(wins, 1);
    assert_eq!(store.load("p1").unwrap().revision, 2);
}

#[tokio::test]
async fn interrupted_writes_keep_the_previous_revision() {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    store.create(project("p1", 1.0)).await.unwrap();
    let faults = Arc::new(AtomicUsize::new(0));
    for n in 0..20u64 {
        let before = store.raw("p1").unwrap();
        let rev = store.load("p1").unwrap().revision;
        let counter = faults.clone();
        // Tear the temp file in half, then fail before the rename.
        store.set_fault_hook(Some(Arc::new(move |point, tmp| {
            assert_eq!(point, FaultPoint::BeforeRename);
            let bytes = std::fs::read(tmp)?;
            std::fs::write(tmp, &bytes[..bytes.len() / 2])?;
            counter.fetch_add(1, Ordering::SeqCst);
            Err(std::io::Error::other("injected crash"))
        })));
        assert!(matches!(
            store.save(rev, project("p1", 10.0 + n as f64)).await,
            Err(StoreError::Io(_))
        ));
        assert_eq!(store.raw("p1").unwrap(), before);
        assert_eq!(store.load("p1").unwrap().revision, rev);
        // A restarted process sees the same thing.
        assert_eq!(ProjectStore::open(dir.path()).unwrap().load("p1").unwrap().revision, rev);

        store.set_fault_hook(None);
        assert_eq!(store.save(rev, project("p1", 2.0 + n as f64)).await.unwrap().revision, rev + 1);
    }
    assert_eq!(faults.load(Ordering::SeqCst), 20);
    assert_eq!(store.list().unwrap(), ["p1"]);
}

#[tokio::test]
async fn delete_removes_the_document() {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    store.create(project("p1", 1.0)).await.unwrap();
    store.delete("p1").await.unwrap();
    assert!(matches!(store.load("p1"), Err(StoreError::NotFound(_))));
    assert!(matches!(store.delete("p1").await, Err(StoreError::NotFound(_))));
    assert!(matches!(store.load("../etc"), Err(StoreError::InvalidId(_))));
}
