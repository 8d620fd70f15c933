use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExposureError;
use crate::geo::UserId;

/// 48-bit Bluetooth MAC address, normalized to uppercase colon-separated hex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MacAddress(String);

impl MacAddress {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for MacAddress {
    type Err = ExposureError;

    /// Accepts `AA:BB:CC:DD:EE:FF`, `aa-bb-cc-dd-ee-ff` and bare `aabbccddeeff`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || ExposureError::InvalidMac(s.to_owned());
        let s_trim = s.trim();
        let digits: String = if s_trim.len() == 12 {
            s_trim.to_owned()
        } else {
            let sep = if s_trim.contains(':') { ':' } else { '-' };
            let groups: Vec<&str> = s_trim.split(sep).collect();
            if groups.len() != 6 || groups.iter().any(|g| g.len() != 2) {
                return Err(invalid());
            }
            groups.concat()
        };
        if digits.len() != 12 || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(invalid());
        }
        let upper = digits.to_ascii_uppercase();
        let pairs: Vec<&str> = (0..6).map(|i| &upper[2 * i..2 * i + 2]).collect();
        Ok(MacAddress(pairs.join(":")))
    }
}

impl TryFrom<String> for MacAddress {
    type Error = ExposureError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MacAddress> for String {
    fn from(m: MacAddress) -> Self {
        m.0
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CovidStatus {
    #[serde(alias = "positive", alias = "COVID-19", alias = "covid-19")]
    Positive,
    #[serde(alias = "negative", alias = "None COVID-19", alias = "none covid-19")]
    Negative,
    #[serde(alias = "recovered", alias = "Recovered")]
    Recovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gender {
    #[serde(alias = "female")]
    Female,
    #[serde(alias = "male")]
    Male,
    #[serde(alias = "other")]
    Other,
    #[default]
    #[serde(alias = "unspecified")]
    Unspecified,
}

/// Fields submitted at registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationForm {
    pub name: String,
    pub phone: String,
    pub postcode: String,
    pub age: u32,
    #[serde(default)]
    pub gender: Gender,
    pub bt_mac: String,
    pub status: CovidStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusChange {
    pub status: CovidStatus,
    pub at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub name: String,
    pub phone: String,
    pub postcode: String,
    pub age: u32,
    pub gender: Gender,
    pub bt_mac: MacAddress,
    pub status: CovidStatus,
    pub status_updated_at: i64,
    /// Every status the user has held, oldest first; starts with the registration status.
    pub status_history: Vec<StatusChange>,
}

/// Registered participants, keyed by pseudonymous id and by MAC.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    users: BTreeMap<UserId, UserRecord>,
    by_mac: BTreeMap<MacAddress, UserId>,
    issued: u64,
    salt: String,
}

impl Registry {
    /// `salt` keys the pseudonymous id sequence.
    pub fn new(salt: impl Into<String>) -> Self {
        Self {
            salt: salt.into(),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn get(&self, id: &UserId) -> Option<&UserRecord> {
        self.users.get(id)
    }

    pub fn owner_of(&self, mac: &MacAddress) -> Option<&UserRecord> {
        self.by_mac.get(mac).and_then(|id| self.users.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    fn next_id(&self) -> UserId {
        let digest = Sha256::new()
            .chain_update(self.salt.as_bytes())
            .chain_update(b"\x00user\x00")
            .chain_update(self.issued.to_le_bytes())
            .finalize();
        UserId(format!("u{}", hex::encode(&digest[..8])))
    }

    /// Validates a form and builds the record it would produce, without registering it.
    pub fn prepare(&self, form: &RegistrationForm, now: i64) -> Result<UserRecord, ExposureError> {
        let bt_mac: MacAddress = form.bt_mac.parse()?;
        if self.by_mac.contains_key(&bt_mac) {
            return Err(ExposureError::DuplicateMac(bt_mac));
        }
        Ok(UserRecord {
            user_id: self.next_id(),
            name: form.name.clone(),
            phone: form.phone.clone(),
            postcode: form.postcode.clone(),
            age: form.age,
            gender: form.gender,
            bt_mac,
            status: form.status,
            status_updated_at: now,
            status_history: vec![StatusChange {
                status: form.status,
                at: now,
            }],
        })
    }

    pub fn insert(&mut self, record: UserRecord) -> Result<(), ExposureError> {
        if self.by_mac.contains_key(&record.bt_mac) {
            return Err(ExposureError::DuplicateMac(record.bt_mac));
        }
        if self.users.contains_key(&record.user_id) {
            return Err(ExposureError::DuplicateUser(record.user_id));
        }
        self.by_mac.insert(record.bt_mac.clone(), record.user_id.clone());
        self.users.insert(record.user_id.clone(), record);
        self.issued += 1;
        Ok(())
    }

    pub fn register(&mut self, form: &RegistrationForm, now: i64) -> Result<UserRecord, ExposureError> {
        let record = self.prepare(form, now)?;
        self.insert(record.clone())?;
        Ok(record)
    }

    /// Appends a status change to the user's history.
    pub fn set_status(&mut self, id: &UserId, change: StatusChange) -> Result<&UserRecord, ExposureError> {
        let user = self
            .users
            .get_mut(id)
            .ok_or_else(|| ExposureError::UnknownUser(id.clone()))?;
        user.status = change.status;
        user.status_updated_at = change.at;
        user.status_history.push(change);
        Ok(user)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn form(mac: &str, status: CovidStatus) -> RegistrationForm {
        RegistrationForm {
            name: "Alice Example".into(),
            phone: "+1 303 555 0100".into(),
            postcode: "80202".into(),
            age: 34,
            gender: Gender::Female,
            bt_mac: mac.into(),
            status,
        }
    }

    #[test]
    fn mac_normalization() {
        let m: MacAddress = "aa-bb-cc-0d-ee-ff".parse().unwrap();
        assert_eq!(m.as_str(), "AA:BB:CC:0D:EE:FF");
        assert_eq!("aabbcc0deeff".parse::<MacAddress>().unwrap(), m);
        for bad in ["", "aa:bb:cc:dd:ee", "gg:bb:cc:dd:ee:ff", "aaa:bb:cc:dd:ee:f", "aa:bb-cc:dd:ee:ff"] {
            assert!(bad.parse::<MacAddress>().is_err(), "{bad}");
        }
    }

    #[test]
    fn register_and_reject_duplicate_mac() {
        let mut reg = Registry::new("s");
        let r = reg.register(&form("aa:bb:cc:dd:ee:01", CovidStatus::Negative), 100).unwrap();
        assert_eq!(r.status, CovidStatus::Negative);
        assert_eq!(r.status_history.len(), 1);
        assert!(!r.user_id.as_str().contains("Alice"));
        let dup = reg.register(&form("AA-BB-CC-DD-EE-01", CovidStatus::Negative), 101);
        assert!(matches!(dup, Err(ExposureError::DuplicateMac(_))));
        let bad = reg.register(&form("nope", CovidStatus::Negative), 101);
        assert!(matches!(bad, Err(ExposureError::InvalidMac(_))));
        assert_eq!(reg.len(), 1);
    }

    #[test]
    fn recovered_status_from_form_text() {
        let json = r#"{"name":"B","phone":"1","postcode":"81611","age":40,"gender":"male",
                       "bt_mac":"00:11:22:33:44:55","status":"recovered"}"#;
        let f: RegistrationForm = serde_json::from_str(json).unwrap();
        let mut reg = Registry::new("");
        assert_eq!(reg.register(&f, 0).unwrap().status, CovidStatus::Recovered);
    }

    #[test]
    fn ids_are_deterministic_per_salt() {
        let mut a = Registry::new("x");
        let mut b = Registry::new("x");
        let mut c = Registry::new("y");
        let f = form("00:00:00:00:00:01", CovidStatus::Negative);
        let ia = a.register(&f, 0).unwrap().user_id;
        assert_eq!(ia, b.register(&f, 0).unwrap().user_id);
        assert_ne!(ia, c.register(&f, 0).unwrap().user_id);
        let second = a.register(&form("00:00:00:00:00:02", CovidStatus::Negative), 0).unwrap();
        assert_ne!(second.user_id, ia);
    }

    #[test]
    fn status_history_appends() {
        let mut reg = Registry::new("");
        let id = reg.register(&form("00:00:00:00:00:01", CovidStatus::Negative), 0).unwrap().user_id;
        let rec = reg
            .set_status(&id, StatusChange { status: CovidStatus::Positive, at: 9 })
            .unwrap();
        assert_eq!(rec.status_history.len(), 2);
        assert_eq!(rec.status_updated_at, 9);
        assert!(matches!(
            reg.set_status(&"ghost".into(), StatusChange { status: CovidStatus::Positive, at: 9 }),
            Err(ExposureError::UnknownUser(_))
        ));
    }
}
