use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geo::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NotificationKind {
    ContactWithPositive,
    NearInfectedArea,
    BtProximity,
}

impl NotificationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NotificationKind::ContactWithPositive => "CONTACT_WITH_POSITIVE",
            NotificationKind::NearInfectedArea => "NEAR_INFECTED_AREA",
            NotificationKind::BtProximity => "BT_PROXIMITY",
        }
    }

    /// Fixed alert text. Carries nothing about the case that caused it.
    pub fn message(self) -> &'static str {
        match self {
            NotificationKind::ContactWithPositive => {
                "Exposure alert: in the last 14 days you were in close contact with someone \
                 who has since tested positive for COVID-19. Please self-isolate and arrange a test."
            }
            NotificationKind::NearInfectedArea => {
                "Area alert: your current location is inside an area recommended for lockdown. \
                 Please keep your distance from others and avoid crowded places."
            }
            NotificationKind::BtProximity => {
                "Proximity alert: a nearby device belongs to a COVID-19 positive or recovered \
                 case. Please keep your distance."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub notification_id: u64,
    pub recipient: UserId,
    pub kind: NotificationKind,
    pub created_at: i64,
    pub message: String,
    /// Opaque digest identifying what caused the notification; used for dedup.
    pub source_event: String,
}

/// Opaque source-event token built from arbitrary parts.
pub fn source_event(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    format!("se-{}", hex::encode(&h.finalize()[..12]))
}

/// Source event for a status report: the index user and the position of the change in their history.
pub fn status_source_event(index_user: &UserId, history_index: usize) -> String {
    source_event(&["status", index_user.as_str(), &history_index.to_string()])
}

/// Per-user notification queue with a global monotone id sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NotificationQueue {
    all: Vec<Notification>,
    by_recipient: BTreeMap<UserId, Vec<usize>>,
    delivered: BTreeSet<(UserId, String)>,
}

impl NotificationQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Notification> {
        self.all.iter()
    }

    fn next_id(&self) -> u64 {
        self.all.last().map_or(1, |n| n.notification_id + 1)
    }

    pub fn contains(&self, recipient: &UserId, source_event: &str) -> bool {
        self.delivered
            .contains(&(recipient.clone(), source_event.to_owned()))
    }

    /// Builds the notifications a fan-out would enqueue, skipping (recipient, source event)
    /// pairs already delivered. Does not modify the queue.
    pub fn prepare<'a>(
        &self,
        kind: NotificationKind,
        source_event: &str,
        recipients: impl IntoIterator<Item = &'a UserId>,
        now: i64,
    ) -> Vec<Notification> {
        let mut next = self.next_id();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in recipients {
            if self.contains(r, source_event) || !seen.insert(r.clone()) {
                continue;
            }
            out.push(Notification {
                notification_id: next,
                recipient: r.clone(),
                kind,
                created_at: now,
                message: kind.message().to_owned(),
                source_event: source_event.to_owned(),
            });
            next += 1;
        }
        out
    }

    /// Enqueues a notification. Returns false, leaving the queue untouched, for a duplicate
    /// (recipient, source event) or an id that does not extend the sequence.
    pub fn push(&mut self, n: Notification) -> bool {
        if n.notification_id != self.next_id() || self.contains(&n.recipient, &n.source_event) {
            return false;
        }
        self.delivered
            .insert((n.recipient.clone(), n.source_event.clone()));
        self.by_recipient
            .entry(n.recipient.clone())
            .or_default()
            .push(self.all.len());
        self.all.push(n);
        true
    }

    /// The recipient's notifications with id greater than `after`, oldest first.
    pub fn poll(&self, recipient: &UserId, after: Option<u64>) -> Vec<Notification> {
        let after = after.unwrap_or(0);
        self.by_recipient
            .get(recipient)
            .into_iter()
            .flatten()
            .map(|&i| &self.all[i])
            .filter(|n| n.notification_id > after)
            .cloned()
            .collect()
    }
}

/// Enqueues one notification of `kind` per recipient for `source_event`. Idempotent per
/// source event: repeating a fan-out enqueues nothing.
pub fn fan_out_notifications<'a>(
    queue: &mut NotificationQueue,
    kind: NotificationKind,
    source_event: &str,
    recipients: impl IntoIterator<Item = &'a UserId>,
    now: i64,
) -> Vec<Notification> {
    let batch = queue.prepare(kind, source_event, recipients, now);
    for n in &batch {
        queue.push(n.clone());
    }
    batch
}
