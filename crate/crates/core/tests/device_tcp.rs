//! Device daemon and client over real loopback sockets.

use std::time::Duration;

use ropuf_core::counter::MeasurementConfig;
use ropuf_core::device_service::{
    request_response, DeviceClient, DeviceDaemon, DeviceError, PufDevice, WireMessage,
};
use ropuf_core::puf_core::{derive_pairs, ChallengePair, ChallengeSet, Digest, CHALLENGE_LEN};
use ropuf_core::ro_model::{fabricate_device, DeviceSpec, Environment, FrequencyBackend};
use ropuf_core::vault::digest;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

const MEASURED_VECTOR: [f64; 8] = [136.0, 46.0, 26.0, 14.0, 204.0, 66.0, 394.0, 56.0];
const TIMEOUT: Duration = Duration::from_secs(5);

async fn spawn_daemon(backend: FrequencyBackend, cfg: MeasurementConfig) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let daemon = DeviceDaemon::new(backend, cfg, 99).unwrap();
    tokio::spawn(daemon.serve(listener));
    addr
}

fn pair_challenge(first: u8, second: u8) -> ChallengeSet {
    let mut pairs = [ChallengePair { first: 0, second: 0 }; CHALLENGE_LEN];
    pairs[0] = ChallengePair { first, second };
    ChallengeSet::new(pairs)
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

#[tokio::test]
async fn replayed_device_answers_over_tcp() {
    let addr = spawn_daemon(
        FrequencyBackend::replay(MEASURED_VECTOR.to_vec()).unwrap(),
        MeasurementConfig::default(),
    )
    .await;
    let bits = request_response(&addr, &pair_challenge(0, 1), TIMEOUT).await.unwrap();
    assert_eq!(bits.to_wire(), "1000000000000000");
    let bits = request_response(&addr, &pair_challenge(4, 0), TIMEOUT).await.unwrap();
    assert!(bits.bits()[0]);
}

#[tokio::test]
async fn noise_free_simulated_device_is_repeatable() {
    let dev = fabricate_device(&DeviceSpec::default(), 17).unwrap();
    let backend = FrequencyBackend::simulated(dev, Environment::noise_free()).unwrap();
    let addr = spawn_daemon(backend, MeasurementConfig::default().pinned(0.0)).await;
    let client = DeviceClient::new(addr, TIMEOUT);
    let challenge = derive_pairs(&digest("password"));
    let first = client.respond(&challenge).await.unwrap();
    for _ in 0..10 {
        assert_eq!(client.respond(&challenge).await.unwrap(), first);
    }
}

#[tokio::test]
async fn out_of_range_challenge_is_a_remote_error() {
    let addr = spawn_daemon(
        FrequencyBackend::replay(vec![1.0, 2.0, 3.0]).unwrap(),
        MeasurementConfig::default(),
    )
    .await;
    let challenge = derive_pairs(&Digest::parse(&"7".repeat(32)).unwrap());
    let err = request_response(&addr, &challenge, TIMEOUT).await.unwrap_err();
    assert!(matches!(err, DeviceError::Remote { ref code, .. } if code == "bad_request"), "{err:?}");
}

#[tokio::test]
async fn refused_and_timeout_are_distinct() {
    let port = free_port();
    let err = request_response(&format!("127.0.0.1:{port}"), &pair_challenge(0, 1), TIMEOUT)
        .await
        .unwrap_err();
    assert!(matches!(err, DeviceError::ConnectionRefused(_)), "{err:?}");

    // accepts connections but never answers
    let silent = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = silent.local_addr().unwrap().to_string();
    let _hold = tokio::spawn(async move {
        let mut held = Vec::new();
        loop {
            let (s, _) = silent.accept().await.unwrap();
            held.push(s);
        }
    });
    let short = Duration::from_millis(200);
    let err = request_response(&addr, &pair_challenge(0, 1), short).await.unwrap_err();
    assert_eq!(err, DeviceError::Timeout(short));
}

#[tokio::test]
async fn pipelined_requests_on_one_connection() {
    let addr = spawn_daemon(
        FrequencyBackend::replay(MEASURED_VECTOR.to_vec()).unwrap(),
        MeasurementConfig::default(),
    )
    .await;
    let stream = TcpStream::connect(&addr).await.unwrap();
    let (read, mut write) = stream.into_split();
    let mut payload = String::new();
    payload.push_str(&WireMessage::challenge(&pair_challenge(0, 1)).to_line());
    payload.push_str("{\"type\":\"challenge\",\"pairs\":\"zz\"}\n");
    payload.push_str(&WireMessage::challenge(&pair_challenge(1, 0)).to_line());
    write.write_all(payload.as_bytes()).await.unwrap();
    write.shutdown().await.unwrap();

    let mut lines = BufReader::new(read).lines();
    let mut replies = Vec::new();
    while let Some(line) = lines.next_line().await.unwrap() {
        replies.push(WireMessage::from_line(&line).unwrap());
    }
    assert_eq!(replies.len(), 3);
    assert!(matches!(&replies[0], WireMessage::Response { bits, .. } if bits.starts_with('1')));
    assert!(matches!(&replies[1], WireMessage::Error { code, .. } if code == "bad_request"));
    assert!(matches!(&replies[2], WireMessage::Response { bits, .. } if bits.starts_with('0')));
}

#[tokio::test]
async fn replies_never_leak_frequencies() {
    let addr = spawn_daemon(
        FrequencyBackend::replay(MEASURED_VECTOR.to_vec()).unwrap(),
        MeasurementConfig::default(),
    )
    .await;
    let stream = TcpStream::connect(&addr).await.unwrap();
    let (read, mut write) = stream.into_split();
    let mut payload = String::new();
    for k in 0..50u32 {
        payload.push_str(&WireMessage::challenge(&derive_pairs(&digest(&k.to_string()))).to_line());
    }
    payload.push_str("garbage\n");
    write.write_all(payload.as_bytes()).await.unwrap();
    write.shutdown().await.unwrap();

    let mut lines = BufReader::new(read).lines();
    let mut count = 0;
    while let Some(line) = lines.next_line().await.unwrap() {
        count += 1;
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        for (key, field) in value.as_object().unwrap() {
            assert!(field.is_string(), "{key} is not a string in {line}");
            if key == "bits" {
                assert!(field.as_str().unwrap().chars().all(|c| c == '0' || c == '1'));
            }
        }
        for f in MEASURED_VECTOR {
            // counts are half the frequencies for a 0.5 s window
            for number in [f, f / 2.0] {
                assert!(!line.contains(&format!("\"{number}\"")), "{line}");
                assert!(!line.contains(&format!(":{number}")), "{line}");
            }
        }
    }
    assert_eq!(count, 51);
}
