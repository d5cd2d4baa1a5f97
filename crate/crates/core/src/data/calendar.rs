//! Calendar covariates derived from timestamps (UTC).

use chrono::{DateTime, Datelike, Timelike};

use super::Channel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CalendarFeatures {
    /// 1-12
    pub month: u32,
    /// 0 = Monday .. 6 = Sunday
    pub week_day: u32,
    /// 0-23
    pub hour: u32,
}

pub fn calendar_features(epoch_seconds: i64) -> CalendarFeatures {
    let dt = DateTime::from_timestamp(epoch_seconds, 0).unwrap_or_default();
    CalendarFeatures {
        month: dt.month(),
        week_day: dt.weekday().num_days_from_monday(),
        hour: dt.hour(),
    }
}

/// `month`, `week_day` and `hour` channels as raw integer values.
pub fn calendar_channels(timestamps: &[i64]) -> Vec<Channel> {
    let feats: Vec<CalendarFeatures> = timestamps.iter().map(|&t| calendar_features(t)).collect();
    vec![
        Channel::new("month", feats.iter().map(|f| f.month as f64).collect()),
        Channel::new("week_day", feats.iter().map(|f| f.week_day as f64).collect()),
        Channel::new("hour", feats.iter().map(|f| f.hour as f64).collect()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_dates() {
        // 2024-01-01T00:00:00Z was a Monday
        let f = calendar_features(1_704_067_200);
        assert_eq!(f, CalendarFeatures { month: 1, week_day: 0, hour: 0 });
        // 2024-07-14T15:00:00Z, a Sunday
        let f = calendar_features(1_720_969_200);
        assert_eq!(f, CalendarFeatures { month: 7, week_day: 6, hour: 15 });
    }
}
