//! The composite service model: atomic services, the registry kept by the
//! coordinator, and functions defined as subsets of the service set.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// |AWS|: number of atomic services.
pub const SERVICE_COUNT: u8 = 24;
/// Number of built-in functions C_1 … C_7.
pub const BUILTIN_FUNCTION_COUNT: usize = 7;

/// One of `aws_1` … `aws_24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServiceId(u8);

impl ServiceId {
    pub fn new(n: u8) -> Result<Self, RegistryError> {
        if (1..=SERVICE_COUNT).contains(&n) {
            Ok(ServiceId(n))
        } else {
            Err(RegistryError::UnknownServiceId(format!("aws_{n}")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ServiceId> {
        (1..=SERVICE_COUNT).map(ServiceId)
    }

    /// What the service does.
    pub fn purpose(self) -> &'static str {
        match self.0 {
            1 => "text extraction from pdf originals into plain text",
            2 => "text extraction from doc/docx originals",
            3 => "language detection",
            4 => "automatic summarization (Ukrainian)",
            5 => "text encoding conversion UTF-8 / WIN-1251",
            6 => "pdf title, author and page-count detection",
            7 => "keyword extraction (Ukrainian)",
            8 => "sentence splitting (Ukrainian)",
            9 => "lemmatized tokenization with part-of-speech tags",
            10 => "raw word-form tokenization",
            11 => "compositional term extraction",
            12 => "stop-word removal",
            13 => "lemmatization (Ukrainian)",
            14 => "neural syntactic parsing",
            15 => "external scholarly publication search agent",
            16 => "full-text search indexing",
            17 => "JSON document storage",
            18 => "ontology representation editor",
            19 => "pattern discovery and classification",
            20 => "compositional linguistic processing front end",
            21 => "vector model queries",
            22 => "personal ontology knowledge base",
            23 => "document template generation and filling",
            24 => "additional bundled services",
            _ => unreachable!("service ids are range-checked"),
        }
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "aws_{}", self.0)
    }
}

impl FromStr for ServiceId {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("aws_")
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| (1..=SERVICE_COUNT).contains(n))
            .map(ServiceId)
            .ok_or_else(|| RegistryError::UnknownServiceId(s.into()))
    }
}

impl Serialize for ServiceId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ServiceId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceStatus {
    Local,
    DeclaredExternal,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub status: ServiceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl ServiceDescriptor {
    pub fn local() -> Self {
        ServiceDescriptor { status: ServiceStatus::Local, endpoint: None }
    }

    pub fn external() -> Self {
        ServiceDescriptor { status: ServiceStatus::DeclaredExternal, endpoint: None }
    }
}

/// Function name such as `C_7`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionId(pub String);

impl FunctionId {
    pub fn builtin(j: usize) -> Self {
        FunctionId(format!("C_{j}"))
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub id: FunctionId,
    pub services: BTreeSet<ServiceId>,
    pub executable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown service id `{0}`")]
    UnknownServiceId(String),
    #[error("a function needs at least one service")]
    EmptyServiceSet,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function {function} is not executable; missing services: {}", join_ids(.missing))]
    NotExecutable { function: FunctionId, missing: Vec<ServiceId> },
}

fn join_ids(ids: &[ServiceId]) -> String {
    ids.iter().map(|s| format!("{s}")).collect::<Vec<_>>().join(", ")
}

/// Service numbers of the built-in functions, C_1 first.
pub const BUILTIN_FUNCTIONS: [&[u8]; BUILTIN_FUNCTION_COUNT] = [
    &[1, 3, 5, 6, 8, 9, 11, 12, 14, 16, 20],
    &[1, 9, 11, 13, 15, 18, 22, 24],
    &[1, 9, 11, 13, 15, 18, 22],
    &[1, 3, 5, 8, 12, 20, 24],
    &[21, 24],
    &[1, 3, 8, 14, 20, 24],
    &[1, 3, 21, 23, 24],
];

/// Services this build runs in-process. aws_20 and aws_24 are served by the
/// crate's own CLI/HTTP layer.
pub const LOCAL_SERVICES: [u8; 15] = [1, 2, 3, 5, 8, 9, 10, 11, 12, 13, 17, 20, 21, 23, 24];

/// Service statuses plus function definitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRegistry {
    services: BTreeMap<ServiceId, ServiceDescriptor>,
    functions: BTreeMap<FunctionId, FunctionDef>,
}

impl Default for ServiceRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl ServiceRegistry {
    /// All 24 services with this build's statuses and C_1 … C_7 defined.
    pub fn standard() -> Self {
        let services = ServiceId::all()
            .map(|id| {
                let d = if LOCAL_SERVICES.contains(&id.0) {
                    ServiceDescriptor::local()
                } else {
                    ServiceDescriptor::external()
                };
                (id, d)
            })
            .collect();
        let mut reg = ServiceRegistry { services, functions: BTreeMap::new() };
        for (j, members) in BUILTIN_FUNCTIONS.iter().enumerate() {
            let ids: Vec<ServiceId> = members.iter().map(|&n| ServiceId(n)).collect();
            reg.define_function(FunctionId::builtin(j + 1), &ids).expect("built-in sets are valid");
        }
        assert_eq!(reg.services.len(), usize::from(SERVICE_COUNT));
        assert_eq!(reg.functions.len(), BUILTIN_FUNCTION_COUNT);
        reg
    }

    pub fn services(&self) -> impl Iterator<Item = (ServiceId, &ServiceDescriptor)> {
        self.services.iter().map(|(&id, d)| (id, d))
    }

    pub fn functions(&self) -> impl Iterator<Item = &FunctionDef> {
        self.functions.values()
    }

    pub fn descriptor(&self, id: ServiceId) -> &ServiceDescriptor {
        &self.services[&id]
    }

    pub fn status(&self, id: ServiceId) -> ServiceStatus {
        self.services[&id].status
    }

    /// Stores (or replaces) a descriptor and refreshes executability.
    pub fn register_service(&mut self, id: &str, descriptor: ServiceDescriptor) -> Result<(), RegistryError> {
        let id: ServiceId = id.parse()?;
        self.services.insert(id, descriptor);
        let statuses = &self.services;
        for f in self.functions.values_mut() {
            f.executable = f.services.iter().all(|s| statuses[s].status == ServiceStatus::Local);
        }
        Ok(())
    }

    pub fn define_function(&mut self, id: FunctionId, services: &[ServiceId]) -> Result<FunctionDef, RegistryError> {
        if services.is_empty() {
            return Err(RegistryError::EmptyServiceSet);
        }
        let services: BTreeSet<ServiceId> = services.iter().copied().collect();
        let executable = services.iter().all(|s| self.status(*s) == ServiceStatus::Local);
        let def = FunctionDef { id: id.clone(), services, executable };
        self.functions.insert(id, def.clone());
        Ok(def)
    }

    /// Like [`Self::define_function`] but with textual service ids.
    pub fn define_function_named(&mut self, id: &str, services: &[&str]) -> Result<FunctionDef, RegistryError> {
        let ids = services.iter().map(|s| s.parse()).collect::<Result<Vec<ServiceId>, _>>()?;
        self.define_function(FunctionId(id.into()), &ids)
    }

    pub fn function(&self, id: &str) -> Result<&FunctionDef, RegistryError> {
        self.functions.get(&FunctionId(id.into())).ok_or_else(|| RegistryError::UnknownFunction(id.into()))
    }

    /// Members of the function that are not available locally.
    pub fn missing_services(&self, def: &FunctionDef) -> Vec<ServiceId> {
        def.services.iter().copied().filter(|&s| self.status(s) != ServiceStatus::Local).collect()
    }

    /// The function definition if every member service can run, otherwise
    /// `NotExecutable` with the missing members.
    pub fn executable(&self, id: &str) -> Result<&FunctionDef, RegistryError> {
        let def = self.function(id)?;
        let missing = self.missing_services(def);
        if missing.is_empty() {
            Ok(def)
        } else {
            Err(RegistryError::NotExecutable { function: def.id.clone(), missing })
        }
    }
}
