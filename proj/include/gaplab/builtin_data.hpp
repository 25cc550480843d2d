#pragma once

#include <string>
#include <vector>

#include "gaplab/catalog.hpp"
#include "gaplab/envmodel.hpp"

namespace gaplab {

namespace detail {

struct BuiltinHostRow {
  const char* cve_id;
  const char* product;
  const char* range_min;
  const char* range_max;
  const char* description;
  int port;
  const char* service;
  const char* version;  // product version exposed on the port, inside range
  const char* banner;
  const char* os_name;
  const char* os_version;
  const char* fingerprints;  // ';'-separated, may be empty
};

// Desk-scale stand-ins for the Vulhub lab hosts. Version ranges and
// descriptions are bundled static text, not live NVD data.
inline const std::vector<BuiltinHostRow>& builtin_rows() {
  static const std::vector<BuiltinHostRow> rows = {
      {"CVE-2018-7600", "Drupal Core", "8.0.0", "8.5.0",
       "Drupal Core 8.0.0 through 8.5.0 allows remote attackers to execute "
       "arbitrary code via crafted form renderable arrays.",
       80, "http", "8.5.0", "Apache/2.4.18 (Ubuntu)", "Ubuntu", "16.04",
       "Drupal 8;PHP/7.0;Apache"},
      {"CVE-2019-0230", "Apache Struts", "2.0.0", "2.5.20",
       "Apache Struts 2.0.0 through 2.5.20 allows remote attackers to "
       "execute arbitrary code via forced double OGNL evaluation of tag "
       "attributes.",
       8080, "http", "2.5.20", "Apache-Coyote/1.1", "Debian", "9",
       "Struts2;Java"},
      {"CVE-2019-9193", "PostgreSQL", "9.3.0", "11.2.0",
       "PostgreSQL 9.3.0 through 11.2.0 allows authenticated users to "
       "execute arbitrary operating system commands via COPY TO/FROM "
       "PROGRAM.",
       5432, "postgresql", "11.2.0", "PostgreSQL 11.2 on x86_64", "Debian",
       "9", ""},
      {"CVE-2020-10199", "Nexus", "3.0.0", "3.21.1",
       "Sonatype Nexus Repository 3.0.0 through 3.21.1 allows remote "
       "attackers with any account to execute arbitrary code via a crafted "
       "EL injection request.",
       8081, "http", "3.21.1", "Nexus/3.21.1 (OSS)", "CentOS", "7",
       "Nexus Repository Manager"},
      {"CVE-2020-7247", "OpenSMTPD", "6.4.0", "6.6.1",
       "OpenSMTPD 6.4.0 through 6.6.1 allows remote attackers to execute "
       "arbitrary commands as root via a crafted SMTP sender address.",
       25, "smtp", "6.6.1", "220 mail ESMTP OpenSMTPD", "Debian", "10", ""},
      {"CVE-2020-7961", "Liferay Portal", "6.1.0", "7.2.0",
       "Liferay Portal 6.1.0 through 7.2.0 allows remote attackers to "
       "execute arbitrary code via JSON web services deserialization of "
       "untrusted data.",
       8080, "http", "7.2.0", "Liferay Portal Community Edition", "Ubuntu",
       "18.04", "Liferay;Java"},
      {"CVE-2020-9496", "Apache OFBiz", "16.11.0", "17.12.3",
       "Apache OFBiz 16.11.0 through 17.12.03 allows remote attackers to "
       "execute arbitrary code via unsafe XML-RPC deserialization.",
       8443, "http", "17.12.3", "Apache OFBiz XML-RPC", "CentOS", "7",
       "OFBiz;Java"},
      {"CVE-2020-16846", "SaltStack Salt", "2015.8.0", "3002.0",
       "SaltStack Salt 2015.8.0 through 3002 allows remote attackers to "
       "execute arbitrary commands via shell injection in the Salt-API SSH "
       "client.",
       8000, "http", "3002.0", "CherryPy/18.6.0", "Ubuntu", "18.04",
       "CherryPy;Salt-API"},
      {"CVE-2021-22205", "GitLab", "11.9.0", "13.10.2",
       "GitLab CE/EE 11.9.0 through 13.10.2 allows unauthenticated remote "
       "attackers to execute arbitrary commands via crafted image files "
       "handled by ExifTool.",
       80, "http", "13.10.2", "nginx", "Ubuntu", "20.04",
       "GitLab;nginx;Ruby"},
      {"CVE-2021-25646", "Apache Druid", "0.1.0", "0.20.0",
       "Apache Druid 0.1.0 through 0.20.0 allows authenticated users to "
       "execute arbitrary JavaScript code embedded in ingestion task "
       "requests.",
       8888, "http", "0.20.0", "Jetty(9.4.x)", "Debian", "10",
       "Apache Druid Console"},
      {"CVE-2021-3129", "Ignition", "2.0.0", "2.5.1",
       "Laravel Ignition 2.0.0 through 2.5.1 allows unauthenticated remote "
       "attackers to execute arbitrary code via insecure "
       "file_get_contents/file_put_contents solution execution.",
       80, "http", "2.5.1", "PHP/7.4.3 Development Server", "Ubuntu",
       "20.04", "Laravel;Ignition;PHP/7.4"},
      {"CVE-2021-41773", "Apache HTTP Server", "2.4.49", "2.4.49",
       "Apache HTTP Server 2.4.49 allows remote attackers to read files "
       "outside the document root, and execute code when CGI is enabled, "
       "via a path traversal in URL normalization.",
       80, "http", "2.4.49", "Apache/2.4.49 (Unix)", "Debian", "11",
       "Apache"},
      {"CVE-2022-0543", "Redis", "5.0.0", "6.0.16",
       "Redis 5.0.0 through 6.0.16 as packaged on Debian allows remote "
       "attackers to escape the Lua sandbox and execute arbitrary code via "
       "the loaded liblua package search path.",
       6379, "redis", "6.0.16", "-NOAUTH Authentication required", "Debian",
       "11", ""},
      {"CVE-2022-22947", "Spring Cloud Gateway", "3.0.0", "3.1.0",
       "VMware Spring Cloud Gateway 3.0.0 through 3.1.0 allows remote "
       "attackers to execute arbitrary code via a crafted SpEL expression "
       "in the actuator gateway routes endpoint.",
       8080, "http", "3.1.0", "Netty", "Ubuntu", "20.04",
       "Spring;Java"},
      {"CVE-2022-46169", "Cacti", "1.2.0", "1.2.22",
       "Cacti 1.2.0 through 1.2.22 allows unauthenticated remote attackers "
       "to execute arbitrary commands via the remote agent polling "
       "endpoint.",
       80, "http", "1.2.22", "Apache/2.4.54 (Debian)", "Debian", "11",
       "Cacti;PHP/7.4"},
      {"CVE-2023-21839", "Oracle WebLogic", "12.2.1.3", "14.1.1.0",
       "Oracle WebLogic Server 12.2.1.3 through 14.1.1.0 allows "
       "unauthenticated remote attackers to take over the server via the "
       "T3/IIOP protocol.",
       7001, "http", "14.1.1.0", "WebLogic Server", "Oracle Linux", "8",
       "WebLogic;Java"},
      {"CVE-2023-32315", "Openfire", "3.10.0", "4.7.4",
       "Ignite Realtime Openfire 3.10.0 through 4.7.4 allows remote "
       "attackers to bypass authentication on the admin console via a path "
       "traversal in the setup environment.",
       9090, "http", "4.7.4", "Jetty", "Debian", "11",
       "Openfire Admin Console"},
      {"CVE-2023-38646", "Metabase", "0.43.0", "0.46.6",
       "Metabase 0.43.0 through 0.46.6 allows unauthenticated remote "
       "attackers to execute arbitrary commands via the exposed setup "
       "token and an H2 connection string.",
       3000, "http", "0.46.6", "Jetty(11.x)", "Ubuntu", "22.04",
       "Metabase"},
      {"CVE-2023-42793", "JetBrains", "2018.1.0", "2023.5.3",
       "JetBrains TeamCity 2018.1 through 2023.05.3 allows unauthenticated "
       "remote attackers to bypass authentication and execute arbitrary "
       "code via the REST API.",
       8111, "http", "2023.5.3", "TeamCity", "Ubuntu", "22.04",
       "TeamCity;Java"},
      {"CVE-2023-46604", "Apache ActiveMQ", "5.15.0", "5.18.2",
       "Apache ActiveMQ 5.15.0 through 5.18.2 allows remote attackers to "
       "execute arbitrary shell commands via crafted serialized class "
       "types in the OpenWire protocol.",
       61616, "activemq", "5.18.2", "ActiveMQ OpenWire Transport", "Debian",
       "12", ""},
  };
  return rows;
}

inline std::vector<std::string> split_fingerprints(const char* s) {
  std::vector<std::string> out;
  std::string cur;
  for (const char* p = s; *p; ++p) {
    if (*p == ';') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(*p);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

inline const CveCatalog& builtin_cve_catalog() {
  static const CveCatalog cat = [] {
    CveCatalog c;
    for (const auto& r : detail::builtin_rows()) {
      CveEntry e;
      e.cve_id = r.cve_id;
      e.vulnerable_product = r.product;
      e.vulnerable_version_range = {r.range_min, r.range_max};
      e.description = r.description;
      c.entries.push_back(std::move(e));
    }
    return c;
  }();
  return cat;
}

// Ground-truth lab host for one bundled CVE.
inline HostProfile builtin_profile(const std::string& cve_id) {
  for (const auto& r : detail::builtin_rows()) {
    if (cve_id != r.cve_id) continue;
    HostProfile h;
    std::string id = cve_id;
    for (auto& c : id) c = static_cast<char>(std::tolower(c));
    h.host_id = "vulhub-" + id;
    h.os = {r.os_name, r.os_version};
    PortEntry p;
    p.number = r.port;
    p.protocol = "tcp";
    p.service = r.service;
    p.product = r.product;
    p.version = r.version;
    p.banner = r.banner;
    h.ports.push_back(std::move(p));
    h.web_fingerprints = detail::split_fingerprints(r.fingerprints);
    h.vulnerability.cve_id = r.cve_id;
    h.vulnerability.vulnerable_product = r.product;
    h.vulnerability.vulnerable_version_range = {r.range_min, r.range_max};
    h.vulnerability.exposing_port = r.port;
    h.vulnerability.description = r.description;
    validate_profile(h);
    return h;
  }
  throw InvariantError("no builtin profile for " + cve_id);
}

inline EnvironmentFile builtin_environment(const std::string& cve_id) {
  EnvironmentFile env;
  env.host = builtin_profile(cve_id);
  env.provenance.kind = Provenance::Kind::Captured;
  return env;
}

// The canonical single-host lab environment (Drupal host of the worked
// randomization example).
inline const std::string& default_cve_id() {
  static const std::string id = "CVE-2018-7600";
  return id;
}

}  // namespace gaplab
