//! Registration, health status, contact lookback, Bluetooth matching and notifications.

mod contacts;
mod notify;
mod user;

pub use contacts::{bluetooth_match, contact_query, BluetoothMatch, Contact, DEFAULT_WINDOW_DAYS, SECONDS_PER_DAY};
pub use notify::{
    fan_out_notifications, source_event, status_source_event, Notification, NotificationKind,
    NotificationQueue,
};
pub use user::{CovidStatus, Gender, MacAddress, RegistrationForm, Registry, StatusChange, UserRecord};

use thiserror::Error;

use crate::geo::UserId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExposureError {
    #[error("malformed MAC address {0:?}")]
    InvalidMac(String),
    #[error("MAC address {0} is already registered")]
    DuplicateMac(MacAddress),
    #[error("user id {0} is already registered")]
    DuplicateUser(UserId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
}
