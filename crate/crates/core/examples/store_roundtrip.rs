//! Ingests JSON Lines sequences into a shard, saves it, reloads it and reads
//! a sequence back with its deltas.

use std::io::Cursor;

use vsdb::store::{build_shard, read_sequences_jsonl, Shard};

const INPUT: &str = r#"{"id": "a", "vectors": [[0.0, 0.0], [1.0, 0.5], [2.0, 1.5]]}
{"id": "b", "vectors": [[5.0, 5.0], [5.5, 4.0]]}
"#;

pub fn main() -> vsdb::Result<()> {
    let lines = read_sequences_jsonl(Cursor::new(INPUT))?;
    let (shard, ids) = build_shard(&lines)?;
    for m in &ids {
        println!("{} -> shard {} seq {}", m.id, m.shard, m.seq_id);
    }

    let dir = std::env::temp_dir().join(format!("vsdb-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.vsdb");
    shard.save(&path)?;
    let loaded = Shard::load(&path)?;
    assert_eq!(loaded.to_bytes(), shard.to_bytes());
    println!("{} records, {} bytes on disk", loaded.len(), std::fs::metadata(&path)?.len());

    for rec in loaded.get_sequence(0)? {
        println!("pos {} vector {:?} delta {:?}", rec.position, rec.vector, rec.delta);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
