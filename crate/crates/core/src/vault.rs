//! Password vault backed by PUF responses.
//!
//! Credentials never reach the table. The cell is picked by XOR-ing the
//! digests of the user name and the password; the challenge is derived from
//! the password digest; and what gets stored is the challenge together with
//! the device's answer to it. Cells are buckets, so colliding users are
//! appended rather than overwritten.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use md5::{Digest as _, Md5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device_service::{DeviceError, PufDevice};
use crate::error::PufError;
use crate::puf_core::{derive_pairs, ChallengeSet, Digest, ResponseBits, CHALLENGE_LEN};

/// Rows and columns of the table.
pub const GRID: usize = 16;
pub const VAULT_FILE_VERSION: u32 = 1;
/// Default acceptance: every bit must match.
pub const DEFAULT_THRESHOLD: u8 = CHALLENGE_LEN as u8;

/// Hash used for user names and passwords.
pub trait TextHasher: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn digest(&self, text: &str) -> Digest;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Md5Hasher;

impl TextHasher for Md5Hasher {
    fn name(&self) -> &'static str {
        "md5"
    }

    fn digest(&self, text: &str) -> Digest {
        let out: [u8; 16] = Md5::digest(text.as_bytes()).into();
        Digest::from_bytes(&out)
    }
}

/// MD5 digest of `text` as 32 lowercase hex characters.
pub fn digest(text: &str) -> Digest {
    Md5Hasher.digest(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u8,
    pub col: u8,
}

impl Cell {
    fn slot(self) -> usize {
        usize::from(self.row) * GRID + usize::from(self.col)
    }
}

/// Row and column from the first two hex digits of `id XOR password`.
pub fn locate(id_digest: &Digest, pw_digest: &Digest) -> Cell {
    let id = id_digest.nibbles();
    let pw = pw_digest.nibbles();
    Cell {
        row: id[0] ^ pw[0],
        col: id[1] ^ pw[1],
    }
}

/// [`locate`] on raw hex strings.
pub fn locate_hex(id_digest: &str, pw_digest: &str) -> Result<Cell, PufError> {
    Ok(locate(&Digest::parse(id_digest)?, &Digest::parse(pw_digest)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaultRecord {
    pub challenge: ChallengeSet,
    pub enrolled_bits: ResponseBits,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl VaultRecord {
    pub fn new(challenge: ChallengeSet, enrolled_bits: ResponseBits) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        VaultRecord {
            challenge,
            enrolled_bits,
            created_at,
        }
    }

    /// Digest of the stored bit string, safe to display.
    pub fn bits_digest(&self) -> Digest {
        digest(&self.enrolled_bits.to_wire())
    }
}

#[derive(Debug, Error)]
pub enum VaultError {
    #[error("registration failed: {0}")]
    RegistrationFailed(DeviceError),
    #[error("authentication could not be completed: {0}")]
    AuthenticationError(DeviceError),
    #[error("vault storage error: {0}")]
    Storage(String),
    #[error("malformed vault file: {0}")]
    Format(String),
    #[error("acceptance threshold must be between 1 and {max}, got {0}", max = CHALLENGE_LEN)]
    InvalidThreshold(u8),
}

/// 16×16 grid of insertion-ordered buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultTable {
    cells: Vec<Vec<VaultRecord>>,
}

impl Default for VaultTable {
    fn default() -> Self {
        VaultTable {
            cells: vec![Vec::new(); GRID * GRID],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VaultFile {
    version: u32,
    cells: Vec<CellFile>,
}

#[derive(Serialize, Deserialize)]
struct CellFile {
    row: u8,
    col: u8,
    records: Vec<RecordFile>,
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    pairs: String,
    bits: String,
    created_at: u64,
}

impl VaultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bucket(&self, cell: Cell) -> &[VaultRecord] {
        &self.cells[cell.slot()]
    }

    pub fn append(&mut self, cell: Cell, record: VaultRecord) {
        self.cells[cell.slot()].push(record);
    }

    fn pop(&mut self, cell: Cell) -> Option<VaultRecord> {
        self.cells[cell.slot()].pop()
    }

    pub fn record_count(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    /// Non-empty cells in row-major order.
    pub fn occupied(&self) -> impl Iterator<Item = (Cell, &[VaultRecord])> {
        self.cells.iter().enumerate().filter(|(_, b)| !b.is_empty()).map(|(slot, b)| {
            let cell = Cell {
                row: (slot / GRID) as u8,
                col: (slot % GRID) as u8,
            };
            (cell, b.as_slice())
        })
    }

    pub fn to_json(&self) -> String {
        let doc = VaultFile {
            version: VAULT_FILE_VERSION,
            cells: self
                .occupied()
                .map(|(cell, records)| CellFile {
                    row: cell.row,
                    col: cell.col,
                    records: records
                        .iter()
                        .map(|r| RecordFile {
                            pairs: r.challenge.to_wire(),
                            bits: r.enrolled_bits.to_wire(),
                            created_at: r.created_at,
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("vault serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, VaultError> {
        let doc: VaultFile =
            serde_json::from_str(text).map_err(|e| VaultError::Format(e.to_string()))?;
        if doc.version != VAULT_FILE_VERSION {
            return Err(VaultError::Format(format!(
                "unsupported vault version {}",
                doc.version
            )));
        }
        let mut table = VaultTable::new();
        for cell in doc.cells {
            if usize::from(cell.row) >= GRID || usize::from(cell.col) >= GRID {
                return Err(VaultError::Format(format!(
                    "cell ({}, {}) lies outside the {GRID}x{GRID} grid",
                    cell.row, cell.col
                )));
            }
            let at = Cell {
                row: cell.row,
                col: cell.col,
            };
            for r in cell.records {
                let challenge = ChallengeSet::from_wire(&r.pairs)
                    .map_err(|e| VaultError::Format(e.to_string()))?;
                let enrolled_bits =
                    ResponseBits::from_wire(&r.bits).map_err(|e| VaultError::Format(e.to_string()))?;
                table.append(
                    at,
                    VaultRecord {
                        challenge,
                        enrolled_bits,
                        created_at: r.created_at,
                    },
                );
            }
        }
        Ok(table)
    }

    /// Write atomically through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<(), VaultError> {
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(self.to_json().as_bytes())?;
            file.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| VaultError::Storage(format!("{}: {e}", path.display())))
    }

    /// Load `path`, or start empty if it does not exist yet.
    pub fn load(path: &Path) -> Result<Self, VaultError> {
        match fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(VaultError::Storage(format!("{}: {e}", path.display()))),
        }
    }

    pub fn view(&self) -> TableView {
        let mut counts = vec![vec![0usize; GRID]; GRID];
        let mut cells = Vec::new();
        for (cell, records) in self.occupied() {
            counts[usize::from(cell.row)][usize::from(cell.col)] = records.len();
            cells.push(CellView {
                row: cell.row,
                col: cell.col,
                count: records.len(),
                records: records.iter().map(|r| r.bits_digest().to_string()).collect(),
            });
        }
        TableView {
            rows: GRID,
            cols: GRID,
            total_records: self.record_count(),
            counts,
            cells,
        }
    }
}

/// Display form of the table: bucket sizes plus per-record bit digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableView {
    pub rows: usize,
    pub cols: usize,
    pub total_records: usize,
    pub counts: Vec<Vec<usize>>,
    pub cells: Vec<CellView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellView {
    pub row: u8,
    pub col: u8,
    pub count: usize,
    pub records: Vec<String>,
}

impl fmt::Display for TableView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "    ")?;
        for col in 0..self.cols {
            write!(f, "{col:>3x}")?;
        }
        writeln!(f)?;
        for (row, counts) in self.counts.iter().enumerate() {
            write!(f, "{row:>3x} ")?;
            for count in counts {
                if *count == 0 {
                    write!(f, "  .")?;
                } else {
                    write!(f, "{count:>3}")?;
                }
            }
            writeln!(f)?;
        }
        writeln!(f, "records: {}", self.total_records)?;
        for cell in &self.cells {
            for digest in &cell.records {
                writeln!(f, "({:x},{:x}) {digest}", cell.row, cell.col)?;
            }
        }
        Ok(())
    }
}

/// Where a credential pair lives and which challenge it maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Enrollment {
    pub cell: Cell,
    pub challenge: ChallengeSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthOutcome {
    Approved,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthResult {
    pub outcome: AuthOutcome,
    /// Best agreement over the bucket, 0 to 16.
    pub matched_bits: u8,
    pub cell: Cell,
}

impl AuthResult {
    pub fn approved(&self) -> bool {
        self.outcome == AuthOutcome::Approved
    }
}

/// Score a fresh response against every record of a bucket.
pub fn judge(bucket: &[VaultRecord], response: &ResponseBits, threshold: u8, cell: Cell) -> AuthResult {
    let matched_bits = bucket
        .iter()
        .map(|r| r.enrolled_bits.matching_bits(response))
        .max()
        .unwrap_or(0);
    let outcome = if !bucket.is_empty() && matched_bits >= threshold {
        AuthOutcome::Approved
    } else {
        AuthOutcome::Failed
    };
    AuthResult {
        outcome,
        matched_bits,
        cell,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Registration {
    pub cell: Cell,
    pub record: VaultRecord,
}

/// Table plus hashing and acceptance policy, optionally persisted to a file.
#[derive(Debug, Clone)]
pub struct Vault {
    table: VaultTable,
    hasher: Arc<dyn TextHasher>,
    threshold: u8,
    path: Option<PathBuf>,
}

impl Default for Vault {
    fn default() -> Self {
        Vault {
            table: VaultTable::new(),
            hasher: Arc::new(Md5Hasher),
            threshold: DEFAULT_THRESHOLD,
            path: None,
        }
    }
}

impl Vault {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Vault persisted at `path`; a missing file starts an empty table.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, VaultError> {
        let path = path.into();
        let table = VaultTable::load(&path)?;
        Ok(Vault {
            table,
            path: Some(path),
            ..Self::default()
        })
    }

    pub fn with_threshold(mut self, threshold: u8) -> Result<Self, VaultError> {
        if threshold == 0 || usize::from(threshold) > CHALLENGE_LEN {
            return Err(VaultError::InvalidThreshold(threshold));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn with_hasher(mut self, hasher: Arc<dyn TextHasher>) -> Self {
        self.hasher = hasher;
        self
    }

    pub fn threshold(&self) -> u8 {
        self.threshold
    }

    pub fn table(&self) -> &VaultTable {
        &self.table
    }

    pub fn enrollment(&self, id: &str, password: &str) -> Enrollment {
        let pw_digest = self.hasher.digest(password);
        Enrollment {
            cell: locate(&self.hasher.digest(id), &pw_digest),
            challenge: derive_pairs(&pw_digest),
        }
    }

    /// Append a record and persist; on a storage failure the table is left
    /// as it was.
    pub fn commit(&mut self, cell: Cell, record: VaultRecord) -> Result<(), VaultError> {
        self.table.append(cell, record);
        if let Err(e) = self.persist() {
            self.table.pop(cell);
            return Err(e);
        }
        Ok(())
    }

    pub fn persist(&self) -> Result<(), VaultError> {
        match &self.path {
            Some(path) => self.table.save(path),
            None => Ok(()),
        }
    }

    pub fn judge(&self, enrollment: &Enrollment, response: &ResponseBits) -> AuthResult {
        judge(
            self.table.bucket(enrollment.cell),
            response,
            self.threshold,
            enrollment.cell,
        )
    }

    pub async fn register<D: PufDevice>(
        &mut self,
        id: &str,
        password: &str,
        device: &D,
    ) -> Result<Registration, VaultError> {
        let enrollment = self.enrollment(id, password);
        let bits = device
            .respond(&enrollment.challenge)
            .await
            .map_err(VaultError::RegistrationFailed)?;
        let record = VaultRecord::new(enrollment.challenge, bits);
        self.commit(enrollment.cell, record)?;
        Ok(Registration {
            cell: enrollment.cell,
            record,
        })
    }

    /// An empty bucket fails straight away without querying the device.
    pub async fn authenticate<D: PufDevice>(
        &self,
        id: &str,
        password: &str,
        device: &D,
    ) -> Result<AuthResult, VaultError> {
        let enrollment = self.enrollment(id, password);
        if self.table.bucket(enrollment.cell).is_empty() {
            return Ok(judge(&[], &ResponseBits::new([false; CHALLENGE_LEN]), self.threshold, enrollment.cell));
        }
        let bits = device
            .respond(&enrollment.challenge)
            .await
            .map_err(VaultError::AuthenticationError)?;
        Ok(self.judge(&enrollment, &bits))
    }

    pub fn render_table(&self) -> TableView {
        self.table.view()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counter::MeasurementConfig;
    use crate::device_service::LocalDevice;
    use crate::puf_core::ChallengePair;
    use crate::ro_model::{fabricate_device, DeviceSpec, Environment, FrequencyBackend};
    use std::future::Future;

    fn noise_free_device(seed: u64) -> LocalDevice {
        let dev = fabricate_device(&DeviceSpec::default(), seed).unwrap();
        let backend = FrequencyBackend::simulated(dev, Environment::noise_free()).unwrap();
        LocalDevice::new(backend, MeasurementConfig::default().pinned(0.0), seed)
    }

    struct DeadDevice;

    impl PufDevice for DeadDevice {
        fn respond(
            &self,
            _challenge: &ChallengeSet,
        ) -> impl Future<Output = Result<ResponseBits, DeviceError>> + Send {
            std::future::ready(Err(DeviceError::ConnectionRefused("nowhere".into())))
        }
    }

    fn block_on<F: Future>(f: F) -> F::Output {
        tokio::runtime::Builder::new_current_thread()
            .build()
            .unwrap()
            .block_on(f)
    }

    /// Two user names that land in the same cell under one password.
    fn colliding_names(password: &str) -> (String, String) {
        let pw = digest(password);
        let target = locate(&digest("user0"), &pw);
        let other = (1..)
            .map(|i| format!("user{i}"))
            .find(|name| locate(&digest(name), &pw) == target)
            .unwrap();
        ("user0".into(), other)
    }

    #[test]
    fn md5_reference_vectors() {
        // independent reference values for MD5
        assert_eq!(digest("").as_str(), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(digest("alice").as_str(), "6384e2b2184bcbf58eccf10ca7a6563c");
        assert_eq!(
            digest("The quick brown fox jumps over the lazy dog").as_str(),
            "9e107d9d372bb6826bd81d3542a419d6"
        );
        assert_eq!(digest("hunter2"), digest("hunter2"));
        assert_eq!(Md5Hasher.name(), "md5");
    }

    #[test]
    fn locate_cases() {
        let zeros = "0".repeat(32);
        let ones = "f".repeat(32);
        let d = digest("same");
        assert_eq!(locate(&d, &d), Cell { row: 0, col: 0 });
        assert_eq!(locate_hex(&ones, &zeros).unwrap(), Cell { row: 15, col: 15 });
        let id = format!("a1{}", "0".repeat(30));
        let pw = format!("0f{}", "0".repeat(30));
        assert_eq!(locate_hex(&id, &pw).unwrap(), Cell { row: 10, col: 14 });
        assert!(matches!(locate_hex("abc", &zeros), Err(PufError::InvalidDigest(_))));
    }

    #[test]
    fn register_then_authenticate() {
        let device = noise_free_device(1);
        let mut vault = Vault::in_memory();
        block_on(async {
            let reg = vault.register("alice", "wonderland", &device).await.unwrap();
            let expected = vault.enrollment("alice", "wonderland");
            assert_eq!(reg.cell, expected.cell);
            assert_eq!(reg.record.challenge, expected.challenge);
            let auth = vault.authenticate("alice", "wonderland", &device).await.unwrap();
            assert!(auth.approved());
            assert_eq!(auth.matched_bits, 16);
            assert_eq!(auth.cell, reg.cell);
        });
    }

    #[test]
    fn colliding_users_share_a_bucket() {
        let device = noise_free_device(2);
        let mut vault = Vault::in_memory();
        let (a, b) = colliding_names("secret");
        block_on(async {
            let ra = vault.register(&a, "secret", &device).await.unwrap();
            let rb = vault.register(&b, "secret", &device).await.unwrap();
            assert_eq!(ra.cell, rb.cell);
            assert_eq!(vault.table().bucket(ra.cell).len(), 2);
            assert!(vault.authenticate(&a, "secret", &device).await.unwrap().approved());
            assert!(vault.authenticate(&b, "secret", &device).await.unwrap().approved());
        });
    }

    #[test]
    fn re_registration_appends() {
        let device = noise_free_device(3);
        let mut vault = Vault::in_memory();
        block_on(async {
            let first = vault.register("bob", "pw", &device).await.unwrap();
            let second = vault.register("bob", "pw", &device).await.unwrap();
            assert_eq!(first.record.challenge, second.record.challenge);
            assert_eq!(vault.table().bucket(first.cell).len(), 2);
            assert_eq!(vault.table().record_count(), 2);
            assert!(vault.authenticate("bob", "pw", &device).await.unwrap().approved());
        });
    }

    #[test]
    fn empty_table_fails_without_device() {
        let vault = Vault::in_memory();
        let auth = block_on(vault.authenticate("x", "y", &DeadDevice)).unwrap();
        assert_eq!(auth.outcome, AuthOutcome::Failed);
        assert_eq!(auth.matched_bits, 0);
    }

    #[test]
    fn device_outage_is_not_a_failed_login() {
        let device = noise_free_device(4);
        let mut vault = Vault::in_memory();
        block_on(async {
            vault.register("carol", "pw", &device).await.unwrap();
            let err = vault.authenticate("carol", "pw", &DeadDevice).await.unwrap_err();
            assert!(matches!(err, VaultError::AuthenticationError(DeviceError::ConnectionRefused(_))));
            let err = vault.register("dave", "pw", &DeadDevice).await.unwrap_err();
            assert!(matches!(err, VaultError::RegistrationFailed(_)));
        });
        assert_eq!(vault.table().record_count(), 1);
    }

    #[test]
    fn wrong_password_is_rejected() {
        let device = noise_free_device(5);
        let mut vault = Vault::in_memory();
        block_on(async {
            vault.register("erin", "correct horse", &device).await.unwrap();
            let auth = vault.authenticate("erin", "battery staple", &device).await.unwrap();
            assert_eq!(auth.outcome, AuthOutcome::Failed);
        });
    }

    #[test]
    fn threshold_bounds() {
        assert!(Vault::in_memory().with_threshold(0).is_err());
        assert!(Vault::in_memory().with_threshold(17).is_err());
        assert_eq!(Vault::in_memory().with_threshold(12).unwrap().threshold(), 12);
    }

    #[test]
    fn judge_uses_best_record_and_threshold() {
        let cell = Cell { row: 1, col: 2 };
        let pairs = ChallengeSet::new([ChallengePair { first: 0, second: 1 }; CHALLENGE_LEN]);
        let record = |bits: &str| VaultRecord {
            challenge: pairs,
            enrolled_bits: ResponseBits::from_wire(bits).unwrap(),
            created_at: 0,
        };
        let bucket = [record("0000000000000000"), record("1111111111111100")];
        let response = ResponseBits::from_wire("1111111111111111").unwrap();
        let strict = judge(&bucket, &response, 16, cell);
        assert_eq!(strict.outcome, AuthOutcome::Failed);
        assert_eq!(strict.matched_bits, 14);
        assert!(judge(&bucket, &response, 14, cell).approved());
    }

    #[test]
    fn empty_view() {
        let view = Vault::in_memory().render_table();
        assert_eq!(view.counts.len(), 16);
        assert!(view.counts.iter().all(|row| row.len() == 16 && row.iter().all(|c| *c == 0)));
        assert!(view.cells.is_empty());
        assert_eq!(view.total_records, 0);
    }

    #[test]
    fn one_registration_one_cell() {
        let device = noise_free_device(6);
        let mut vault = Vault::in_memory();
        let reg = block_on(vault.register("frank", "pw", &device)).unwrap();
        let view = vault.render_table();
        let nonzero: Vec<_> = view
            .counts
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, n)| (r, c, *n)))
            .filter(|(_, _, n)| *n > 0)
            .collect();
        assert_eq!(nonzero, vec![(usize::from(reg.cell.row), usize::from(reg.cell.col), 1)]);
        assert_eq!(view.cells[0].records, vec![reg.record.bits_digest().to_string()]);
        assert!(view.to_string().contains("records: 1"));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vault.json");
        let device = noise_free_device(7);
        let mut vault = Vault::open(&path).unwrap();
        block_on(async {
            for i in 0..20 {
                vault.register(&format!("u{i}"), &format!("p{i}"), &device).await.unwrap();
            }
        });
        let written = fs::read_to_string(&path).unwrap();
        let reloaded = Vault::open(&path).unwrap();
        assert_eq!(reloaded.table(), vault.table());
        reloaded.persist().unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), written);
        assert!(written.starts_with("{\n  \"version\": 1,"));
        // empty cells are omitted
        let doc: serde_json::Value = serde_json::from_str(&written).unwrap();
        let cells = doc["cells"].as_array().unwrap();
        assert!(cells.iter().all(|c| !c["records"].as_array().unwrap().is_empty()));
    }

    #[test]
    fn bad_vault_files() {
        assert!(VaultTable::from_json("{\"version\":2,\"cells\":[]}").is_err());
        assert!(VaultTable::from_json(
            "{\"version\":1,\"cells\":[{\"row\":16,\"col\":0,\"records\":[]}]}"
        )
        .is_err());
        let bad_bits = format!(
            "{{\"version\":1,\"cells\":[{{\"row\":0,\"col\":0,\"records\":[{{\"pairs\":\"{}\",\"bits\":\"2\",\"created_at\":0}}]}}]}}",
            "0".repeat(32)
        );
        assert!(matches!(VaultTable::from_json(&bad_bits), Err(VaultError::Format(_))));
    }

    #[test]
    fn failed_persist_leaves_table_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let mut vault = Vault::open(dir.path().join("missing-dir").join("vault.json")).unwrap();
        let device = noise_free_device(8);
        let err = block_on(vault.register("gina", "pw", &device)).unwrap_err();
        assert!(matches!(err, VaultError::Storage(_)));
        assert_eq!(vault.table().record_count(), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn locate_is_symmetric(a in "[0-9a-f]{32}", b in "[0-9a-f]{32}") {
                prop_assert_eq!(locate_hex(&a, &b).unwrap(), locate_hex(&b, &a).unwrap());
            }

            #[test]
            fn digest_format(text in ".*") {
                let d = digest(&text);
                prop_assert_eq!(d.as_str().len(), 32);
                prop_assert!(d.as_str().chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
            }

            #[test]
            fn nothing_secret_is_stored_or_shown(
                creds in proptest::collection::vec(("[a-z]{3,10}", "[A-Za-z0-9]{8,16}"), 1..12)
            ) {
                let device = noise_free_device(9);
                let mut vault = Vault::in_memory();
                block_on(async {
                    for (id, pw) in &creds {
                        vault.register(id, pw, &device).await.unwrap();
                    }
                });
                prop_assert_eq!(vault.table().record_count(), creds.len());
                let stored = vault.table().to_json();
                let shown = serde_json::to_string(&vault.render_table()).unwrap()
                    + &vault.render_table().to_string();
                for (id, pw) in &creds {
                    for text in [&stored, &shown] {
                        prop_assert!(!text.contains(pw.as_str()));
                        prop_assert!(!text.contains(digest(pw).as_str()));
                        prop_assert!(!text.contains(digest(id).as_str()));
                    }
                }
            }
        }
    }
}
