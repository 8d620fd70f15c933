#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use proxtrace_core::exposure::{CovidStatus, Gender, RegistrationForm};
use proxtrace_core::geo::GeoPoint;
use proxtrace_core::lockdown::{BoundingBox, Region};
use proxtrace_service::{serve_with_clock, ManualClock, ServiceConfig, ServiceHandle};
use tokio::runtime::Runtime;

pub const CENTER: GeoPoint = GeoPoint {
    lat: 39.7392,
    lon: -104.9903,
};
pub const T0: i64 = 1_600_000_000;

pub fn region() -> Region {
    Region {
        region_id: "denver".into(),
        name: "Denver".into(),
        bounding_box: BoundingBox::around(CENTER, 0.005),
        k: 2,
        seed: 0,
    }
}

pub fn config(dir: &Path) -> ServiceConfig {
    let mut c = ServiceConfig::new(dir, vec![region()]);
    c.bind = "127.0.0.1:0".parse().unwrap();
    c.assessment_interval_secs = 0;
    c.id_salt = "test".into();
    c
}

pub fn form(i: usize) -> RegistrationForm {
    RegistrationForm {
        name: format!("Resident {i}"),
        phone: format!("+1303555{i:04}"),
        postcode: "80202".into(),
        age: 25 + i as u32,
        gender: Gender::Other,
        bt_mac: format!("02:11:22:33:44:{i:02X}"),
        status: CovidStatus::Negative,
    }
}

pub struct Running {
    pub rt: Runtime,
    pub handle: ServiceHandle,
}

impl Running {
    pub fn url(&self) -> String {
        self.handle.url()
    }

    pub fn stop(self) {
        let Running { rt, handle } = self;
        rt.block_on(handle.shutdown()).unwrap();
    }

    /// Drops the runtime without a graceful shutdown.
    pub fn kill(self) {
        self.rt.shutdown_background();
    }
}

pub fn start(config: ServiceConfig, clock: Arc<ManualClock>) -> Running {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let handle = rt.block_on(serve_with_clock(config, clock)).unwrap();
    Running { rt, handle }
}
