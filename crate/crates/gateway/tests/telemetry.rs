mod common;

use std::time::{Duration, Instant};

use common::{replay_config, start_gateway};
use ets_client::{Client, EntryBody};
use ets_core::protocol::{encode_packet, GeneralPacket};
use tokio::io::AsyncWriteExt;
use tokio::net::TcpStream;

#[tokio::test]
async fn framed_packets_become_vitals() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = replay_config(dir.path(), vec![]);
    cfg.telemetry_port = Some(port);
    let gw = start_gateway(&cfg).await;

    let mut bytes = vec![0xAA, 0x02, 0x13];
    for bpm in [70u8, 71, 72] {
        let p = GeneralPacket {
            battery_pct: 80,
            heart_rate_bpm: bpm,
            ..Default::default()
        };
        bytes.extend(encode_packet(&p).unwrap());
    }
    let mut s = TcpStream::connect(("127.0.0.1", port)).await.unwrap();
    for chunk in bytes.chunks(5) {
        s.write_all(chunk).await.unwrap();
    }
    s.shutdown().await.unwrap();

    let client = Client::new(&gw.base);
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let bpms: Vec<u8> = client
            .events(0)
            .await
            .unwrap()
            .into_iter()
            .filter_map(|e| match e.body {
                EntryBody::Vital { bpm } => Some(bpm),
                _ => None,
            })
            .collect();
        if bpms.len() == 3 {
            assert_eq!(bpms, [70, 71, 72]);
            break;
        }
        assert!(Instant::now() < deadline, "got {bpms:?}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(client.status().await.unwrap().bpm, Some(72));
}
